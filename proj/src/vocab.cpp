#include "ecglang/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace ecglang::io {

Vocab::Vocab() {
    push("<pad>");
    push("<bos>");
    push("<eos>");
    push("<unk>");
}

void Vocab::push(const std::string& tok) {
    token_to_id_[tok] = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(tok);
}

int Vocab::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw Error("vocab id out of range: " + std::to_string(id));
    return id_to_token_[id];
}

std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Vocab Vocab::build(const std::vector<std::string>& corpus, int min_freq) {
    if (corpus.empty()) throw DataError("cannot build vocab from an empty corpus");
    if (min_freq < 1) throw ConfigError("min_freq must be >= 1");

    std::map<std::string, long> freq; // ordered map gives the lexicographic tie-break for free
    for (const auto& text : corpus)
        for (const auto& w : tokenize_words(text)) ++freq[w];

    std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocab v;
    for (const auto& [tok, n] : items)
        if (n >= min_freq) v.push(tok);
    return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    for (const auto& tok : tokens) v.push(tok);
    return v;
}

TokenSeq tokenize(const std::string& text, const Vocab& vocab, int m_max) {
    if (m_max < 3) throw ConfigError("m_max must be >= 3");
    TokenSeq ids;
    ids.push_back(Vocab::kBos);
    for (const auto& w : tokenize_words(text)) {
        if (static_cast<int>(ids.size()) >= m_max - 1) break;
        ids.push_back(vocab.id(w));
    }
    ids.push_back(Vocab::kEos);
    return ids;
}

std::string detokenize(const TokenSeq& ids, const Vocab& vocab) {
    std::string out;
    for (int id : ids) {
        if (vocab.is_special(id)) continue;
        if (!out.empty()) out.push_back(' ');
        out += vocab.token(id);
    }
    return out;
}

void Vocab::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write vocab " + path);
    for (int i = 4; i < size(); ++i) f << id_to_token_[i] << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open vocab " + path);
    Vocab v;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) v.push(line);
    }
    return v;
}

} // namespace ecglang::io

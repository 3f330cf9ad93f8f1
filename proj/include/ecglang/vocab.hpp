#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ecglang/error.hpp"

namespace ecglang::io {

using TokenSeq = std::vector<int>;

// Report vocabulary. Ids 0..3 are reserved specials; content tokens are
// assigned 4.. by descending corpus frequency, ties broken lexicographically.
class Vocab {
  public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    Vocab();

    int id(const std::string& token) const; // kUnk when absent
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(id_to_token_.size()); }
    bool is_special(int id) const { return id >= 0 && id < 4; }

    static Vocab build(const std::vector<std::string>& corpus, int min_freq);

    // Reconstructs a vocab from its ordered content-token list (ids 4..).
    static Vocab from_tokens(const std::vector<std::string>& tokens);

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

  private:
    void push(const std::string& tok);
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

// Lowercases and splits on whitespace/punctuation boundaries; tokens are
// maximal alphanumeric runs, punctuation is dropped.
std::vector<std::string> tokenize_words(const std::string& text);

// BOS + content ids (UNK for out-of-vocab) + EOS, truncated to m_max with
// EOS kept last. Requires m_max >= 3.
TokenSeq tokenize(const std::string& text, const Vocab& vocab, int m_max);

// Joins the non-special tokens of a sequence with single spaces.
std::string detokenize(const TokenSeq& ids, const Vocab& vocab);

} // namespace ecglang::io

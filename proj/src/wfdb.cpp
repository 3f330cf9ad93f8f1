#include "ecglang/wfdb.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace ecglang::io {

const std::array<const char*, kNumLeads> kDefaultLeadNames = {
    "I", "II", "III", "AVR", "AVL", "AVF", "V1", "V2", "V3", "V4", "V5", "V6"};

Label label_from_string(const std::string& s) {
    if (s == "NORM") return Label::NORM;
    if (s == "MI") return Label::MI;
    if (s == "STTC") return Label::STTC;
    if (s == "CD") return Label::CD;
    if (s == "HYP") return Label::HYP;
    throw UnknownLabel("unknown label token: '" + s + "'");
}

const char* label_to_string(Label l) {
    switch (l) {
        case Label::NORM: return "NORM";
        case Label::MI: return "MI";
        case Label::STTC: return "STTC";
        case Label::CD: return "CD";
        case Label::HYP: return "HYP";
    }
    return "?";
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw Error("format_double failed");
    return std::string(buf.data(), ptr);
}

namespace {

double parse_number(const std::string& tok, const char* what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw DataError(std::string("bad numeric field for ") + what + ": '" + tok + "'");
    return v;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

} // namespace

EcgRecord parse_record(const std::string& header_text,
                       const std::vector<std::uint8_t>& signal_bytes) {
    std::istringstream hs(header_text);
    std::string line;
    if (!std::getline(hs, line)) throw DataError("empty header");
    auto head = split_ws(line);
    if (head.size() != 4) throw DataError("header line 1 must be: record_id n_leads fs n_samples");

    EcgRecord rec;
    rec.record_id = head[0];
    const long n_leads = std::lround(parse_number(head[1], "n_leads"));
    rec.fs = parse_number(head[2], "fs");
    const long n_samples = std::lround(parse_number(head[3], "n_samples"));

    if (n_leads != kNumLeads)
        throw DataError("expected 12 leads, header declares " + std::to_string(n_leads));
    if (rec.fs <= 0) throw DataError("fs must be positive");
    if (n_samples <= 0) throw DataError("n_samples must be positive");

    rec.lead_names.resize(kNumLeads);
    rec.gains.resize(kNumLeads);
    for (int ch = 0; ch < kNumLeads; ++ch) {
        if (!std::getline(hs, line)) throw DataError("header truncated at lead line " + std::to_string(ch));
        auto parts = split_ws(line);
        if (parts.size() != 2) throw DataError("lead line must be: lead_name gain_lsb_per_mv");
        rec.lead_names[ch] = parts[0];
        rec.gains[ch] = parse_number(parts[1], "gain");
        if (rec.gains[ch] <= 0) throw DataError("gain must be positive for lead " + parts[0]);
    }

    const std::size_t expect = 2ull * kNumLeads * static_cast<std::size_t>(n_samples);
    if (signal_bytes.size() != expect)
        throw DataError("signal byte length " + std::to_string(signal_bytes.size()) +
                        " does not match header, expected " + std::to_string(expect));

    rec.leads.resize(kNumLeads, n_samples);
    const std::uint8_t* p = signal_bytes.data();
    for (long s = 0; s < n_samples; ++s) {
        for (int ch = 0; ch < kNumLeads; ++ch) {
            const std::uint16_t u = static_cast<std::uint16_t>(p[0]) |
                                    (static_cast<std::uint16_t>(p[1]) << 8);
            const std::int16_t raw = static_cast<std::int16_t>(u);
            rec.leads(ch, s) = static_cast<double>(raw) / rec.gains[ch];
            p += 2;
        }
    }
    return rec;
}

std::pair<std::string, std::vector<std::uint8_t>> write_record(const EcgRecord& rec) {
    if (rec.leads.rows() != kNumLeads) throw DataError("record must have 12 leads");
    if (static_cast<int>(rec.lead_names.size()) != kNumLeads ||
        static_cast<int>(rec.gains.size()) != kNumLeads)
        throw DataError("record lead metadata incomplete");

    std::ostringstream hs;
    hs << rec.record_id << ' ' << kNumLeads << ' ' << format_double(rec.fs) << ' '
       << rec.samples() << '\n';
    for (int ch = 0; ch < kNumLeads; ++ch)
        hs << rec.lead_names[ch] << ' ' << format_double(rec.gains[ch]) << '\n';

    std::vector<std::uint8_t> bytes;
    bytes.resize(2ull * kNumLeads * static_cast<std::size_t>(rec.samples()));
    std::uint8_t* p = bytes.data();
    for (Eigen::Index s = 0; s < rec.samples(); ++s) {
        for (int ch = 0; ch < kNumLeads; ++ch) {
            double scaled = rec.leads(ch, s) * rec.gains[ch];
            if (!std::isfinite(scaled)) throw DataError("non-finite sample in record " + rec.record_id);
            double q = std::round(scaled);
            q = std::min(32767.0, std::max(-32768.0, q));
            const std::int16_t raw = static_cast<std::int16_t>(q);
            const std::uint16_t u = static_cast<std::uint16_t>(raw);
            p[0] = static_cast<std::uint8_t>(u & 0xff);
            p[1] = static_cast<std::uint8_t>(u >> 8);
            p += 2;
        }
    }
    return {hs.str(), std::move(bytes)};
}

EcgRecord read_record_files(const std::string& path_prefix) {
    std::ifstream hf(path_prefix + ".hea");
    if (!hf) throw DataError("cannot open header " + path_prefix + ".hea");
    std::stringstream hbuf;
    hbuf << hf.rdbuf();

    std::ifstream df(path_prefix + ".dat", std::ios::binary);
    if (!df) throw DataError("cannot open signal " + path_prefix + ".dat");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(df)),
                                    std::istreambuf_iterator<char>());
    return parse_record(hbuf.str(), bytes);
}

void write_record_files(const EcgRecord& rec, const std::string& path_prefix) {
    auto [header, bytes] = write_record(rec);
    std::ofstream hf(path_prefix + ".hea", std::ios::binary);
    if (!hf) throw DataError("cannot write " + path_prefix + ".hea");
    hf << header;
    std::ofstream df(path_prefix + ".dat", std::ios::binary);
    if (!df) throw DataError("cannot write " + path_prefix + ".dat");
    df.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
}

std::vector<ManifestEntry> load_manifest(const std::string& csv_path) {
    std::ifstream f(csv_path);
    if (!f) throw DataError("cannot open manifest " + csv_path);
    const fs::path base = fs::path(csv_path).parent_path();

    std::vector<ManifestEntry> out;
    std::map<std::string, int> seen;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            first = false;
            if (line.rfind("record_id,", 0) == 0) continue; // optional header row
        }
        if (line.empty()) continue;

        // record_id,path,labels,report -- the report keeps any further commas.
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
        const auto c3 = c2 == std::string::npos ? c2 : line.find(',', c2 + 1);
        if (c3 == std::string::npos) throw DataError("manifest row needs 4 fields: " + line);

        ManifestEntry e;
        e.record_id = line.substr(0, c1);
        e.path = line.substr(c1 + 1, c2 - c1 - 1);
        const std::string labels = line.substr(c2 + 1, c3 - c2 - 1);
        e.report = line.substr(c3 + 1);

        if (seen.count(e.record_id))
            throw DataError("duplicate record_id in manifest: " + e.record_id);
        seen[e.record_id] = 1;

        std::size_t pos = 0;
        while (pos <= labels.size() && !labels.empty()) {
            auto sep = labels.find(';', pos);
            const std::string tok =
                labels.substr(pos, sep == std::string::npos ? std::string::npos : sep - pos);
            if (!tok.empty()) e.labels.insert(label_from_string(tok));
            if (sep == std::string::npos) break;
            pos = sep + 1;
        }

        const fs::path prefix = fs::path(e.path).is_absolute() ? fs::path(e.path) : base / e.path;
        e.path = prefix.string();
        if (!fs::exists(prefix.string() + ".hea") || !fs::exists(prefix.string() + ".dat"))
            throw DataError("missing record files for " + e.record_id + " at " + e.path);

        out.push_back(std::move(e));
    }
    return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& csv_path) {
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw DataError("cannot write manifest " + csv_path);
    f << "record_id,path,labels,report\n";
    for (const auto& e : entries) {
        f << e.record_id << ',' << e.path << ',';
        bool firstLabel = true;
        for (auto l : e.labels) {
            if (!firstLabel) f << ';';
            f << label_to_string(l);
            firstLabel = false;
        }
        f << ',' << e.report << '\n';
    }
}

} // namespace ecglang::io

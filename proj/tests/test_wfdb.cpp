#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ecglang/wfdb.hpp"

using namespace ecglang;

namespace {

// Independent serializer for the round-trip oracle: mirrors the documented
// format without touching write_record.
std::pair<std::string, std::vector<std::uint8_t>> oracle_serialize(
    const std::string& id, const std::vector<std::string>& names,
    const std::vector<double>& gains, double fs,
    const std::vector<std::vector<std::int16_t>>& raw) {
    std::ostringstream h;
    h << id << " 12 " << io::format_double(fs) << ' ' << raw[0].size() << '\n';
    for (int ch = 0; ch < 12; ++ch)
        h << names[static_cast<std::size_t>(ch)] << ' '
          << io::format_double(gains[static_cast<std::size_t>(ch)]) << '\n';
    std::vector<std::uint8_t> bytes;
    for (std::size_t s = 0; s < raw[0].size(); ++s)
        for (int ch = 0; ch < 12; ++ch) {
            const auto u = static_cast<std::uint16_t>(raw[static_cast<std::size_t>(ch)][s]);
            bytes.push_back(static_cast<std::uint8_t>(u & 0xff));
            bytes.push_back(static_cast<std::uint8_t>(u >> 8));
        }
    return {h.str(), bytes};
}

std::vector<std::uint8_t> zero_bytes(int samples) {
    return std::vector<std::uint8_t>(2u * 12u * static_cast<unsigned>(samples), 0);
}

std::string simple_header(int samples, double fs = 100, double gain = 1000) {
    std::ostringstream h;
    h << "r0 12 " << io::format_double(fs) << ' ' << samples << '\n';
    for (int ch = 0; ch < 12; ++ch)
        h << io::kDefaultLeadNames[static_cast<std::size_t>(ch)] << ' '
          << io::format_double(gain) << '\n';
    return h.str();
}

} // namespace

TEST_CASE("parse_record scales by gain") {
    // one frame: lead 0 = +1000 raw at gain 1000 -> 1.0 mV
    auto bytes = zero_bytes(1);
    bytes[0] = 0xe8; // 1000 = 0x03e8 little endian
    bytes[1] = 0x03;
    const auto rec = io::parse_record(simple_header(1), bytes);
    CHECK(rec.leads(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rec.leads(1, 0) == 0.0);
    CHECK(rec.fs == 100.0);
}

TEST_CASE("parse_record zero bytes give zero leads") {
    const auto rec = io::parse_record(simple_header(100), zero_bytes(100));
    CHECK(rec.samples() == 100);
    CHECK(rec.leads.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parse_record voltage is linear in gain") {
    auto bytes = zero_bytes(2);
    bytes[0] = 0x10;
    bytes[3] = 0x01; // some nonzero samples
    const auto a = io::parse_record(simple_header(2, 100, 500), bytes);
    const auto b = io::parse_record(simple_header(2, 100, 1000), bytes);
    CHECK((a.leads - 2.0 * b.leads).cwiseAbs().maxCoeff() == doctest::Approx(0).epsilon(1e-15));
}

TEST_CASE("parse_record rejects malformed input") {
    CHECK_THROWS_AS(io::parse_record(simple_header(2), zero_bytes(3)), DataError);
    CHECK_THROWS_AS(io::parse_record("r0 11 100 1\n", zero_bytes(1)), DataError);
    std::string bad_gain = "r0 12 100 1\n";
    for (int ch = 0; ch < 12; ++ch) bad_gain += "L 0\n";
    CHECK_THROWS_AS(io::parse_record(bad_gain, zero_bytes(1)), DataError);
    std::string bad_fs = simple_header(1);
    bad_fs.replace(bad_fs.find("100"), 3, "-10");
    CHECK_THROWS_AS(io::parse_record(bad_fs, zero_bytes(1)), DataError);
}

TEST_CASE("write_record round-trips random records byte-exactly") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> sample(-3000, 3000);
    std::uniform_int_distribution<int> n_samples(5, 40);
    const std::vector<double> gain_choices = {200, 500, 1000, 2000};

    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::string> names(io::kDefaultLeadNames.begin(), io::kDefaultLeadNames.end());
        std::vector<double> gains;
        for (int ch = 0; ch < 12; ++ch) gains.push_back(gain_choices[rng() % gain_choices.size()]);
        const int ns = n_samples(rng);
        std::vector<std::vector<std::int16_t>> raw(12, std::vector<std::int16_t>(static_cast<std::size_t>(ns)));
        for (auto& lead : raw)
            for (auto& v : lead) v = static_cast<std::int16_t>(sample(rng));

        const auto [header, bytes] =
            oracle_serialize("rt" + std::to_string(trial), names, gains, 100.0, raw);
        const auto rec = io::parse_record(header, bytes);
        const auto [header2, bytes2] = io::write_record(rec);
        CHECK(header2 == header);
        CHECK(bytes2 == bytes);
    }
}

TEST_CASE("manifest parsing") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "ecglang_manifest_test";
    fs::create_directories(dir);

    // a real record pair for the existence check
    const auto rec = io::parse_record(simple_header(4), zero_bytes(4));
    io::write_record_files(rec, (dir / "r1").string());

    SUBCASE("single row single label") {
        std::ofstream((dir / "m.csv").string()) << "record_id,path,labels,report\nr1,r1,NORM,sinus rhythm\n";
        const auto entries = io::load_manifest((dir / "m.csv").string());
        REQUIRE(entries.size() == 1);
        CHECK(entries[0].labels == std::set<io::Label>{io::Label::NORM});
        CHECK(entries[0].report == "sinus rhythm");
    }
    SUBCASE("two labels split on semicolon") {
        std::ofstream((dir / "m.csv").string()) << "r1,r1,MI;HYP,infarct\n";
        const auto entries = io::load_manifest((dir / "m.csv").string());
        REQUIRE(entries.size() == 1);
        CHECK(entries[0].labels == std::set<io::Label>{io::Label::MI, io::Label::HYP});
    }
    SUBCASE("unknown label") {
        std::ofstream((dir / "m.csv").string()) << "r1,r1,XYZ,text\n";
        CHECK_THROWS_AS(io::load_manifest((dir / "m.csv").string()), UnknownLabel);
    }
    SUBCASE("duplicate record id") {
        std::ofstream((dir / "m.csv").string()) << "r1,r1,NORM,a\nr1,r1,NORM,b\n";
        CHECK_THROWS_AS(io::load_manifest((dir / "m.csv").string()), DataError);
    }
    SUBCASE("missing record files") {
        std::ofstream((dir / "m.csv").string()) << "r9,r9,NORM,a\n";
        CHECK_THROWS_AS(io::load_manifest((dir / "m.csv").string()), DataError);
    }
    fs::remove_all(dir);
}

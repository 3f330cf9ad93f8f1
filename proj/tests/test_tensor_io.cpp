#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ecglang/tensor_io.hpp"

using namespace ecglang;

namespace fs = std::filesystem;

TEST_CASE("tensor container round trip is exact") {
    std::mt19937_64 rng(91);
    std::normal_distribution<double> normal;
    io::TensorMap tensors;
    tensors["alpha"] = Eigen::MatrixXd(3, 4);
    tensors["beta.long.name"] = Eigen::MatrixXd(1, 7);
    tensors["gamma"] = Eigen::MatrixXd(5, 1);
    for (auto& [name, m] : tensors)
        for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = normal(rng);

    const auto path = (fs::temp_directory_path() / "ecglang_tns_test.tns").string();
    io::save_tensors(tensors, path);
    const auto loaded = io::load_tensors(path);
    REQUIRE(loaded.size() == tensors.size());
    for (const auto& [name, m] : tensors) {
        REQUIRE(loaded.count(name) == 1);
        CHECK((loaded.at(name) - m).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(io::tensor_checksum(loaded) == io::tensor_checksum(tensors));
    fs::remove(path);
}

TEST_CASE("embedding file round trip is byte exact") {
    std::mt19937_64 rng(92);
    std::normal_distribution<float> normal;
    Eigen::MatrixXf table(9, 5);
    for (Eigen::Index i = 0; i < table.size(); ++i) table(i) = normal(rng);

    const auto path = (fs::temp_directory_path() / "ecglang_emb_test.emb").string();
    io::save_embedding_file(table, path);

    // byte-level: rewriting what we read must reproduce the file exactly
    const auto loaded = io::load_embedding_file(path);
    CHECK((loaded - table).cwiseAbs().maxCoeff() == 0.0f);

    std::ifstream f(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(bytes.size() == 12 + 4ull * 9 * 5);
    CHECK(bytes.substr(0, 4) == "EMB1");

    const auto path2 = (fs::temp_directory_path() / "ecglang_emb_test2.emb").string();
    io::save_embedding_file(loaded, path2);
    std::ifstream f2(path2, std::ios::binary);
    std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(bytes == bytes2);
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("bad magic rejected") {
    const auto path = (fs::temp_directory_path() / "ecglang_bad.tns").string();
    std::ofstream(path, std::ios::binary) << "NOPE1234";
    CHECK_THROWS_AS(io::load_tensors(path), DataError);
    CHECK_THROWS_AS(io::load_embedding_file(path), DataError);
    fs::remove(path);
}

TEST_CASE("checksum changes when a value changes") {
    io::TensorMap a, b;
    a["w"] = Eigen::MatrixXd::Ones(2, 2);
    b["w"] = Eigen::MatrixXd::Ones(2, 2);
    b["w"](1, 1) += 1e-15;
    CHECK(io::tensor_checksum(a) != io::tensor_checksum(b));
}

TEST_CASE("hex64 formatting") {
    CHECK(io::hex64(0) == "0000000000000000");
    CHECK(io::hex64(0xdeadbeefull) == "00000000deadbeef");
}

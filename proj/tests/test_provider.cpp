#include <doctest.h>

#include <filesystem>
#include <random>

#include "ecglang/provider.hpp"
#include "ecglang/tensor_io.hpp"

using namespace ecglang;
using embed::EmbeddingProvider;
using nn::Mat;

namespace fs = std::filesystem;

TEST_CASE("stand-in provider is reproducible from its seed") {
    const auto a = EmbeddingProvider::stand_in(20, 16, 1234);
    const auto b = EmbeddingProvider::stand_in(20, 16, 1234);
    const auto c = EmbeddingProvider::stand_in(20, 16, 1235);
    CHECK((a.table() - b.table()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.checksum() == b.checksum());
    CHECK((a.table() - c.table()).cwiseAbs().maxCoeff() > 0.0);
    CHECK(a.checksum() != c.checksum());
}

TEST_CASE("embed_report looks up table rows") {
    const auto p = EmbeddingProvider::stand_in(10, 8, 7);
    const io::TokenSeq toks = {io::Vocab::kBos, io::Vocab::kEos};
    const Mat e = p.embed_report(toks);
    REQUIRE(e.rows() == 2);
    CHECK((e.row(0) - p.table().row(1)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((e.row(1) - p.table().row(2)).cwiseAbs().maxCoeff() == 0.0);

    const Mat e2 = p.embed_report(toks);
    CHECK((e - e2).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(p.embed_report({42}), DataError);
}

TEST_CASE("llm_map shape contract and constant propagation") {
    const int d_model = 12, d_emb = 8, m = 5;
    const auto p = EmbeddingProvider::stand_in(16, d_emb, 3);

    nn::ParamSet learned;
    std::mt19937_64 rng(4);
    embed::init_mapper_params(learned, d_model, d_emb, m, rng);

    nn::Tape tape;
    nn::ParamBinding bind(tape, learned);
    nn::Var x = tape.leaf(Mat::Zero(6, d_model));
    nn::Var l = p.llm_map(x, bind, m);
    CHECK(l.value().rows() == m);
    CHECK(l.value().cols() == d_emb);

    // zero X with zero projection: every query attends to identical rows,
    // so all m outputs are identical (response of the frozen layer to zero)
    for (int r = 1; r < m; ++r)
        CHECK((l.value().row(r) - l.value().row(0)).cwiseAbs().maxCoeff() < 1e-12);

    // m = 1 works
    nn::ParamSet learned1;
    std::mt19937_64 rng1(4);
    embed::init_mapper_params(learned1, d_model, d_emb, 1, rng1);
    nn::Tape tape1;
    nn::ParamBinding bind1(tape1, learned1);
    nn::Var l1 = p.llm_map(tape1.leaf(Mat::Zero(6, d_model)), bind1, 1);
    CHECK(l1.value().rows() == 1);
}

TEST_CASE("gradients flow through the frozen layer to learned parts only") {
    const int d_model = 6, d_emb = 8, m = 3;
    const auto provider = EmbeddingProvider::stand_in(12, d_emb, 5);
    const auto checksum_before = provider.checksum();

    nn::ParamSet learned;
    std::mt19937_64 rng(6);
    embed::init_mapper_params(learned, d_model, d_emb, m, rng);

    std::normal_distribution<double> normal;
    Mat x(4, d_model);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = normal(rng);

    nn::Tape tape;
    nn::ParamBinding bind(tape, learned);
    nn::Var l = provider.llm_map(tape.leaf(x), bind, m);
    nn::Var loss = nn::sum_all(nn::cmul(l, l));
    tape.backward(loss);
    bind.harvest();

    CHECK(learned.grads.at("map.proj").cwiseAbs().maxCoeff() > 0.0);
    CHECK(learned.grads.at("map.queries").cwiseAbs().maxCoeff() > 0.0);
    CHECK(provider.checksum() == checksum_before);
}

TEST_CASE("vocab_logits ties to the table and argmax recovers the row") {
    const int vocab = 24, d_emb = 16;
    const auto p = EmbeddingProvider::stand_in(vocab, d_emb, 11);

    for (int j : {0, 5, 13, 23}) {
        const Mat l = p.table().row(j);
        const Mat logits = p.vocab_logits_eval(l);
        // brute-force inner products
        int best = 0;
        double best_v = -1e300;
        for (int t = 0; t < vocab; ++t) {
            const double v = p.table().row(j).dot(p.table().row(t));
            if (v > best_v) {
                best_v = v;
                best = t;
            }
        }
        Eigen::Index argmax;
        logits.row(0).maxCoeff(&argmax);
        CHECK(static_cast<int>(argmax) == best);
        CHECK(best == j); // near-orthogonal random rows
    }
}

TEST_CASE("vocab_logits permutation equivariance") {
    const auto p = EmbeddingProvider::stand_in(6, 4, 13);
    std::mt19937_64 rng(14);
    std::normal_distribution<double> normal;
    Mat l(3, 4);
    for (Eigen::Index i = 0; i < l.size(); ++i) l(i) = normal(rng);

    const Mat base = p.vocab_logits_eval(l);

    // permute table rows via a copied provider table
    std::vector<int> perm = {3, 1, 4, 0, 5, 2};
    Mat permuted(6, 4);
    for (int r = 0; r < 6; ++r) permuted.row(r) = p.table().row(perm[static_cast<std::size_t>(r)]);
    const Mat permuted_logits = l * permuted.transpose();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 6; ++c)
            CHECK(permuted_logits(r, c) ==
                  doctest::Approx(base(r, perm[static_cast<std::size_t>(c)])).epsilon(1e-12));
}

TEST_CASE("file-backed provider loads the EMB1 table") {
    Eigen::MatrixXf table(8, 6);
    for (Eigen::Index i = 0; i < table.size(); ++i) table(i) = static_cast<float>(i) * 0.25f;
    const auto path = (fs::temp_directory_path() / "ecglang_prov.emb").string();
    io::save_embedding_file(table, path);

    const auto p = EmbeddingProvider::file_backed(path);
    CHECK(p.kind() == EmbeddingProvider::Kind::FileBacked);
    CHECK(p.rows() == 8);
    CHECK(p.d_emb() == 6);
    CHECK((p.table().cast<float>() - table).cwiseAbs().maxCoeff() == 0.0f);

    // FileBacked llm_map skips the frozen layer but keeps shape
    nn::ParamSet learned;
    std::mt19937_64 rng(15);
    embed::init_mapper_params(learned, 4, 6, 2, rng);
    nn::Tape tape;
    nn::ParamBinding bind(tape, learned);
    nn::Var l = p.llm_map(tape.leaf(nn::Mat::Ones(3, 4)), bind, 2);
    CHECK(l.value().rows() == 2);
    CHECK(l.value().cols() == 6);
    fs::remove(path);
}

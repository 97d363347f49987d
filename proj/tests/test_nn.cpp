#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "gpcd/nn.hpp"
#include "gpcd/rng.hpp"
#include "support/gradcheck.hpp"

using namespace gpcd;
using gpcd::testing::gradcheck;

namespace {

// Ring neighbor table: point i connects to the next k points.
std::vector<int> ring_neighbors(int n, int k) {
    std::vector<int> idx(static_cast<size_t>(n) * k);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) idx[static_cast<size_t>(i) * k + j] = (i + 1 + j) % n;
    return idx;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& p) : path(p) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("parameter init is bounded by sqrt(1/fan_in) and seeded") {
    ParamStoreT<double> store;
    Rng rng(42);
    auto w = store.create_uniform("w", {64, 32}, 64, rng);
    const double limit = std::sqrt(1.0 / 64.0);
    for (double v : w.values()) CHECK(std::abs(v) <= limit);

    ParamStoreT<double> store2;
    Rng rng2(42);
    auto w2 = store2.create_uniform("w", {64, 32}, 64, rng2);
    CHECK(w.values() == w2.values());
}

TEST_CASE("param store rejects duplicates and unknown lookups") {
    ParamStore store;
    Rng rng(1);
    store.create_uniform("w", {2, 2}, 2, rng);
    CHECK_THROWS_AS(store.create_uniform("w", {2, 2}, 2, rng), invalid_state);
    CHECK_THROWS_AS(store.at("missing"), invalid_state);
    CHECK(store.param_count() == 4);
}

TEST_CASE("first adam step with unit gradient moves a parameter by about lr") {
    ParamStore store;
    auto p = store.create("p", {1}, {1.0f});
    p.grad().assign(1, 1.0f);
    store.adam_step(0.1);
    CHECK(std::abs(p.values()[0] - 0.9f) <= 1e-6f);
    CHECK(store.step_count() == 1);
}

TEST_CASE("adam throws on a missing gradient and holds still on a zero one") {
    ParamStore store;
    auto p = store.create("p", {2}, {1.0f, 2.0f});
    CHECK_THROWS_AS(store.adam_step(0.1), invalid_state);

    p.grad().assign(2, 0.0f);
    store.adam_step(0.1);
    CHECK(p.values() == std::vector<float>{1.0f, 2.0f});
}

TEST_CASE("adam with a constant gradient keeps stepping in its direction") {
    ParamStore store;
    auto p = store.create("p", {1}, {5.0f});
    float prev = 5.0f;
    for (int i = 0; i < 10; ++i) {
        p.zero_grad();
        p.grad().assign(1, 2.0f);
        store.adam_step(0.05);
        CHECK(p.values()[0] < prev);
        prev = p.values()[0];
    }
}

TEST_CASE("adam state survives a checkpoint round trip bitwise") {
    Rng init(77);
    auto fresh_store = [&](uint64_t seed) {
        ParamStore store;
        Rng rng(seed);
        store.create_uniform("a", {3, 2}, 3, rng);
        store.create_uniform("b", {2}, 2, rng);
        return store;
    };
    auto seed_grads = [](ParamStore& store, float v) {
        for (const auto& [name, t] : store.params()) {
            Tensor handle = t;
            handle.grad().assign(handle.values().size(), v);
        }
    };

    ParamStore a = fresh_store(8);
    for (int i = 0; i < 3; ++i) {
        a.zero_grad();
        seed_grads(a, 0.3f + 0.1f * i);
        a.adam_step(0.05);
    }

    Checkpoint ckpt = snapshot_params(a);
    append_optimizer_state(ckpt, a, "optim.");
    ParamStore b = fresh_store(9);  // different init, fully overwritten below
    restore_params(b, ckpt);
    REQUIRE(restore_optimizer_state(b, ckpt, "optim."));
    CHECK(b.step_count() == a.step_count());

    // identical future gradients now produce identical trajectories
    for (int i = 0; i < 3; ++i) {
        a.zero_grad();
        b.zero_grad();
        seed_grads(a, -0.2f + 0.05f * i);
        seed_grads(b, -0.2f + 0.05f * i);
        a.adam_step(0.05);
        b.adam_step(0.05);
    }
    for (const auto& [name, t] : a.params()) CHECK(b.at(name).values() == t.values());

    // absent state reports false and leaves the store untouched
    ParamStore c = fresh_store(10);
    CHECK(!restore_optimizer_state(c, snapshot_params(a), "optim."));
    CHECK(c.step_count() == 0);

    // mismatched moment length is rejected
    Checkpoint bad = ckpt;
    bad.at("optim.m.a").values.pop_back();
    ParamStore d = fresh_store(11);
    CHECK_THROWS_AS(restore_optimizer_state(d, bad, "optim."), invalid_state);
}

TEST_CASE("adam drives a quadratic toward its minimum") {
    ParamStoreT<double> store;
    Rng rng(7);
    auto p = store.create_uniform("p", {1, 4}, 1, rng);
    auto target = TensorT<double>::leaf({1, 4}, {0.3, -0.2, 0.5, 0.1});
    for (int iter = 0; iter < 400; ++iter) {
        store.zero_grad();
        auto loss = sum_of_squares(sub(p, target));
        backward(loss);
        store.adam_step(0.01);
    }
    for (int j = 0; j < 4; ++j)
        CHECK(p.values()[j] == doctest::Approx(target.values()[j]).epsilon(1e-2));
}

TEST_CASE("linear layer applies xW + b") {
    ParamStoreT<double> store;
    auto w = store.create("lin.w", {2, 2}, {1, 0, 0, 1});
    auto b = store.create("lin.b", {2}, {10, 20});
    auto layer = LinearT<double>::from_store(store, "lin");
    auto y = layer(TensorT<double>::leaf({1, 2}, {3, 4}));
    CHECK(y.values() == std::vector<double>{13, 24});
}

TEST_CASE("dense edge conv parameter count follows the dense connectivity") {
    ParamStore store;
    Rng rng(3);
    DenseEdgeConv::create(store, "conv", 3, {32, 32, 32}, rng);
    // blocks see 6, 6+32, 6+64 inputs: 224 + 1248 + 2272 parameters
    CHECK(store.param_count() == 3744);

    ParamStore store2;
    DenseEdgeConv::create(store2, "conv", 32, {64, 64, 64, 64}, rng);
    CHECK(store2.param_count() == 41216);
}

TEST_CASE("dense edge conv maps constant features to identical outputs") {
    ParamStoreT<double> store;
    Rng rng(11);
    auto conv = DenseEdgeConvT<double>::create(store, "conv", 3, {8, 8}, rng);
    const int n = 6, k = 3;
    std::vector<double> values(static_cast<size_t>(n) * 3);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) values[static_cast<size_t>(i) * 3 + j] = 0.5 * (j + 1);
    auto f = TensorT<double>::leaf({n, 3}, values);
    auto out = conv(f, ring_neighbors(n, k), k);
    for (int i = 1; i < n; ++i)
        for (int j = 0; j < 8; ++j)
            CHECK(out.values()[static_cast<size_t>(i) * 8 + j] ==
                  out.values()[static_cast<size_t>(j)]);
}

TEST_CASE("dense edge conv is equivariant under point permutation") {
    ParamStoreT<double> store;
    Rng rng(12);
    auto conv = DenseEdgeConvT<double>::create(store, "conv", 2, {5, 7}, rng);
    const int n = 5, k = 2;
    Rng data_rng(13);
    std::vector<double> values(static_cast<size_t>(n) * 2);
    for (double& v : values) v = data_rng.uniform(-1.0, 1.0);
    auto f = TensorT<double>::leaf({n, 2}, values);
    auto idx = ring_neighbors(n, k);
    auto out = conv(f, idx, k);

    const std::vector<int> perm{3, 0, 4, 1, 2};  // new_index -> old_index
    std::vector<int> inv(n);
    for (int i = 0; i < n; ++i) inv[perm[i]] = i;
    std::vector<double> pvalues(values.size());
    std::vector<int> pidx(idx.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 2; ++j)
            pvalues[static_cast<size_t>(i) * 2 + j] =
                values[static_cast<size_t>(perm[i]) * 2 + j];
        for (int j = 0; j < k; ++j)
            pidx[static_cast<size_t>(i) * k + j] =
                inv[idx[static_cast<size_t>(perm[i]) * k + j]];
    }
    // GEMM micro-kernels round differently depending on row position, so
    // equivariance holds to fp tolerance rather than bitwise.
    auto pout = conv(TensorT<double>::leaf({n, 2}, pvalues), pidx, k);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 7; ++j)
            CHECK(pout.values()[static_cast<size_t>(i) * 7 + j] ==
                  doctest::Approx(out.values()[static_cast<size_t>(perm[i]) * 7 + j])
                      .epsilon(1e-12));
}

TEST_CASE("dense edge conv gradchecks through two blocks") {
    Rng rng(14);
    int total_checked = 0, total_skipped = 0;
    for (int trial = 0; trial < 10; ++trial) {
        ParamStoreT<double> store;
        auto conv = DenseEdgeConvT<double>::create(store, "conv", 2, {4, 3}, rng);
        const int n = 4, k = 2;
        auto f = gpcd::testing::random_leaf(rng, {n, 2});
        auto idx = ring_neighbors(n, k);
        std::vector<gpcd::testing::DTensor> inputs{f};
        for (const auto& [name, t] : store.params()) inputs.push_back(t);
        auto res = gradcheck([&] { return conv(f, idx, k); }, inputs, rng, 1e-3,
                             /*skip_crossings=*/true);
        CHECK(res.max_rel <= 1e-3);
        total_checked += res.checked;
        total_skipped += res.skipped;
    }
    CHECK(total_checked > 10 * total_skipped);
}

TEST_CASE("edge conv rejects a malformed neighbor table") {
    ParamStore store;
    Rng rng(15);
    auto conv = DenseEdgeConv::create(store, "conv", 2, {4}, rng);
    auto f = Tensor::leaf({3, 2}, {1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(conv(f, {0, 1, 2}, 2), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip parameters bitwise") {
    TempFile tmp("nn_ckpt_roundtrip.bin");
    ParamStore store;
    Rng rng(21);
    store.create_uniform("a.w", {5, 3}, 5, rng);
    store.create_uniform("a.b", {3}, 5, rng);
    auto ckpt = snapshot_params(store);
    ckpt.emplace("meta.step", CheckpointTensor{{1}, {42.0f}});
    save_checkpoint(tmp.path, ckpt);

    auto loaded = load_checkpoint(tmp.path);
    CHECK(loaded.size() == 3);
    CHECK(loaded.at("meta.step").values[0] == 42.0f);

    ParamStore fresh;
    Rng rng2(99);
    fresh.create_uniform("a.w", {5, 3}, 5, rng2);
    fresh.create_uniform("a.b", {3}, 5, rng2);
    restore_params(fresh, loaded);
    CHECK(fresh.at("a.w").values() == store.at("a.w").values());
    CHECK(fresh.at("a.b").values() == store.at("a.b").values());
}

TEST_CASE("checkpoint loader rejects bad magic, version and truncation") {
    TempFile bad("nn_ckpt_bad.bin");
    {
        std::ofstream out(bad.path, std::ios::binary);
        out.write("NOTACKPT", 8);
    }
    CHECK_THROWS_AS(load_checkpoint(bad.path), io_error);

    TempFile vers("nn_ckpt_vers.bin");
    {
        std::ofstream out(vers.path, std::ios::binary);
        out.write("GPCDCKPT", 8);
        const unsigned char v2[4] = {2, 0, 0, 0};
        out.write(reinterpret_cast<const char*>(v2), 4);
        const unsigned char zero[4] = {0, 0, 0, 0};
        out.write(reinterpret_cast<const char*>(zero), 4);
    }
    CHECK_THROWS_AS(load_checkpoint(vers.path), io_error);

    TempFile trunc("nn_ckpt_trunc.bin");
    {
        ParamStore store;
        Rng rng(22);
        store.create_uniform("w", {4, 4}, 4, rng);
        save_checkpoint(trunc.path, snapshot_params(store));
        std::ifstream in(trunc.path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        in.close();
        bytes.resize(bytes.size() - 10);
        std::ofstream out(trunc.path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(trunc.path), io_error);

    CHECK_THROWS_AS(load_checkpoint("nn_ckpt_does_not_exist.bin"), io_error);
}

TEST_CASE("restoring from a checkpoint with a missing or misshapen tensor throws") {
    TempFile tmp("nn_ckpt_mismatch.bin");
    ParamStore store;
    Rng rng(23);
    store.create_uniform("w", {2, 2}, 2, rng);
    save_checkpoint(tmp.path, snapshot_params(store));
    auto ckpt = load_checkpoint(tmp.path);

    ParamStore extra;
    Rng rng2(24);
    extra.create_uniform("w", {2, 2}, 2, rng2);
    extra.create_uniform("v", {2, 2}, 2, rng2);
    CHECK_THROWS_AS(restore_params(extra, ckpt), io_error);

    ParamStore wrong;
    Rng rng3(25);
    wrong.create_uniform("w", {4, 1}, 4, rng3);
    CHECK_THROWS_AS(restore_params(wrong, ckpt), io_error);
}

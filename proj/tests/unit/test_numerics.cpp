#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "shuttle/errors.hpp"
#include "shuttle/numerics/ops.hpp"
#include "shuttle/numerics/param_store.hpp"
#include "shuttle/numerics/random.hpp"
#include "shuttle/numerics/tape.hpp"

using namespace shuttle;

TEST_SUITE("tensor") {
  TEST_CASE("shape and data length agree") {
    Tensor t({2, 3, 4}, 1.5);
    CHECK(t.size() == 24);
    CHECK(t(1, 2, 3) == 1.5);
    CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
    CHECK_THROWS_AS(Tensor({1, 1, 1, 1}), DimensionError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  }

  TEST_CASE("non-finite detection") {
    Tensor t = Tensor::vector({1.0, 2.0});
    CHECK(t.all_finite());
    t[1] = std::nan("");
    CHECK_FALSE(t.all_finite());
  }
}

TEST_SUITE("param store") {
  TEST_CASE("insertion order and grad shapes") {
    ParamStore store;
    store.add("b/second", Tensor({2, 3}, 1.0));
    store.add("a/first", Tensor({4}, 2.0));
    CHECK_THROWS_AS(store.add("a/first", Tensor({1})), ContractError);
    std::vector<std::string> names;
    for (const auto& e : store) {
      names.push_back(e.name);
      CHECK(e.grad.shape() == e.value.shape());
    }
    CHECK(names == std::vector<std::string>{"b/second", "a/first"});
    CHECK(store.scalar_count() == 10);
  }
}

TEST_SUITE("matmul") {
  TEST_CASE("identity") {
    Tape tape;
    auto c = ops::matmul(tape.constant(Tensor::matrix({{1, 0}, {0, 1}})), tape.constant(Tensor::matrix({{3}, {4}})));
    CHECK(c.value() == Tensor::matrix({{3}, {4}}));
  }

  TEST_CASE("hand arithmetic") {
    Tape tape;
    auto c = ops::matmul(tape.constant(Tensor::matrix({{1, 2}})), tape.constant(Tensor::matrix({{3}, {4}})));
    CHECK(c.value() == Tensor::matrix({{11}}));
  }

  TEST_CASE("random 3x4 by 4x2 against triple loop") {
    Rng rng(11);
    const Tensor a = uniform_tensor({3, 4}, -1, 1, rng);
    const Tensor b = uniform_tensor({4, 2}, -1, 1, rng);
    Tape tape;
    const auto c = ops::matmul(tape.constant(a), tape.constant(b));
    CHECK(max_abs_diff(c.value(), oracle::matmul(a, b)) <= 1e-12);
  }

  TEST_CASE("shape mismatch names both shapes") {
    Tape tape;
    try {
      ops::matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3})));
      FAIL("expected a dimension error");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
    }
  }

  TEST_CASE("gradients dA = dC B^T, dB = A^T dC") {
    Rng rng(12);
    ParamStore store;
    store.add("a", uniform_tensor({3, 4}, -1, 1, rng));
    store.add("b", uniform_tensor({4, 2}, -1, 1, rng));
    const Tensor weights = uniform_tensor({3, 2}, -1, 1, rng);
    Tape tape;
    auto c = ops::matmul(tape.param(store, "a"), tape.param(store, "b"));
    tape.backward(ops::sum(ops::mul(c, tape.constant(weights))));
    CHECK(max_abs_diff(store.grad("a"), oracle::matmul(weights, oracle::transpose(store.value("b")))) <= 1e-12);
    CHECK(max_abs_diff(store.grad("b"), oracle::matmul(oracle::transpose(store.value("a")), weights)) <= 1e-12);
  }
}

TEST_SUITE("elementwise") {
  TEST_CASE("relu") {
    Tape tape;
    CHECK(ops::relu(tape.constant(Tensor::vector({-1, 0, 2}))).value() == Tensor::vector({0, 0, 2}));
  }

  TEST_CASE("sigmoid at zero and far tails") {
    Tape tape;
    const auto s = ops::sigmoid(tape.constant(Tensor::vector({0.0, -800.0, 800.0})));
    CHECK(s.value()[0] == 0.5);
    CHECK(s.value()[1] >= 0.0);
    CHECK(s.value()[2] == 1.0);
    CHECK(s.value().all_finite());
  }

  TEST_CASE("tanh backward at 0.3 against central difference") {
    ParamStore store;
    store.add("x", Tensor::scalar(0.3));
    Tape tape;
    tape.backward(ops::sum(ops::tanh(tape.param(store, "x"))));
    const double analytic = store.grad("x")[0];
    CHECK(analytic == doctest::Approx(1.0 - std::tanh(0.3) * std::tanh(0.3)).epsilon(1e-15));
    const double h = 1e-5;
    const double numeric = (std::tanh(0.3 + h) - std::tanh(0.3 - h)) / (2 * h);
    CHECK(std::abs(analytic - numeric) / std::abs(numeric) < 1e-8);
  }

  TEST_CASE("scalar-or-same-shape broadcasting only") {
    Tape tape;
    const auto m = tape.constant(Tensor({2, 3}, 1.0));
    CHECK(ops::add(m, tape.constant(Tensor::scalar(2.0))).value() == Tensor({2, 3}, 3.0));
    CHECK_THROWS_AS(ops::add(m, tape.constant(Tensor({3}, 1.0))), DimensionError);
    CHECK_THROWS_AS(ops::mul(m, tape.constant(Tensor({3, 2}, 1.0))), DimensionError);
  }

  TEST_CASE("broadcast gradient reduces to the scalar operand") {
    ParamStore store;
    store.add("s", Tensor::scalar(2.0));
    Tape tape;
    const auto m = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    tape.backward(ops::sum(ops::mul(m, tape.param(store, "s"))));
    CHECK(store.grad("s")[0] == 10.0);
  }
}

TEST_SUITE("softmax") {
  TEST_CASE("singleton is one") {
    for (double c : {-1e6, -3.5, 0.0, 42.0, 1e6}) {
      Tape tape;
      CHECK(ops::softmax(tape.constant(Tensor::vector({c}))).value()[0] == 1.0);
    }
  }

  TEST_CASE("symmetric pair") {
    Tape tape;
    CHECK(ops::softmax(tape.constant(Tensor::vector({0, 0}))).value() == Tensor::vector({0.5, 0.5}));
  }

  TEST_CASE("large equal logits do not overflow") {
    Tape tape;
    const auto s = ops::softmax(tape.constant(Tensor::vector({1000, 1000})));
    CHECK(s.value() == Tensor::vector({0.5, 0.5}));
  }

  TEST_CASE("empty input is rejected") {
    CHECK_THROWS_AS(ops::softmax_values(Tensor()), DimensionError);
  }

  TEST_CASE("sums to one and is permutation-equivariant") {
    Rng rng(21);
    for (int probe = 0; probe < 200; ++probe) {
      const std::size_t n = 1 + rng.index(9);
      Tensor v = uniform_tensor({n}, -50, 50, rng);
      const Tensor s = ops::softmax_values(v);
      double total = 0.0;
      for (double p : s.values()) {
        CHECK(p > 0.0);
        total += p;
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);

      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng.engine());
      Tensor pv({n});
      for (std::size_t i = 0; i < n; ++i) pv[i] = v[perm[i]];
      const Tensor ps = ops::softmax_values(pv);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(ps[i] - s[perm[i]]) <= 1e-15 * std::max(1.0, s[perm[i]]));
    }
  }

  TEST_CASE("matrix rows are independent distributions") {
    const Tensor s = ops::softmax_values(Tensor::matrix({{0, 0, 0}, {1, 2, 3}}));
    for (std::size_t j = 0; j < 3; ++j) CHECK(s(0, j) == doctest::Approx(1.0 / 3.0));
    CHECK(s(1, 2) > s(1, 1));
  }
}

TEST_SUITE("backward") {
  TEST_CASE("sum of W x gives x broadcast across rows") {
    ParamStore store;
    store.add("W", Tensor({3, 2}, 0.7));
    const Tensor x = Tensor::matrix({{2}, {-5}});
    Tape tape;
    tape.backward(ops::sum(ops::matmul(tape.param(store, "W"), tape.constant(x))));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(store.grad("W")(i, 0) == 2.0);
      CHECK(store.grad("W")(i, 1) == -5.0);
    }
  }

  TEST_CASE("sigmoid(w) * w at zero has gradient one half") {
    ParamStore store;
    store.add("w", Tensor::scalar(0.0));
    Tape tape;
    const auto w = tape.param(store, "w");
    tape.backward(ops::sum(ops::mul(ops::sigmoid(w), w)));
    CHECK(store.grad("w")[0] == 0.5);
  }

  TEST_CASE("non-scalar loss is a contract error") {
    Tape tape;
    const auto v = tape.constant(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(tape.backward(v), ContractError);
  }

  TEST_CASE("tape is consumed") {
    ParamStore store;
    store.add("w", Tensor::scalar(1.0));
    Tape tape;
    const auto loss = ops::sum(tape.param(store, "w"));
    tape.backward(loss);
    CHECK(tape.consumed());
    CHECK_THROWS_AS(tape.backward(loss), ContractError);
  }

  TEST_CASE("parameter reused across steps accumulates") {
    ParamStore store;
    store.add("w", Tensor::scalar(3.0));
    Tape tape;
    const auto a = ops::mul(tape.param(store, "w"), tape.constant(Tensor::scalar(2.0)));
    const auto b = ops::mul(tape.param(store, "w"), tape.param(store, "w"));
    tape.backward(ops::sum(ops::add(a, b)));
    CHECK(store.grad("w")[0] == 2.0 + 2 * 3.0);
  }

  TEST_CASE("forward replay is deterministic") {
    Rng rng(5);
    const Tensor a = uniform_tensor({4, 3}, -1, 1, rng);
    const Tensor b = uniform_tensor({3, 3}, -1, 1, rng);
    auto run = [&] {
      Tape tape;
      return ops::softmax(ops::tanh(ops::matmul(tape.constant(a), tape.constant(b)))).value();
    };
    CHECK(run() == run());
  }

  TEST_CASE("non-finite nodes are reported") {
    Tape tape;
    const auto x = tape.constant(Tensor::vector({1e200, 0.0}));
    CHECK_FALSE(tape.first_non_finite());
    ops::mul(x, x);
    const auto where = tape.first_non_finite();
    REQUIRE(where);
    CHECK(where->find("mul") != std::string::npos);
  }
}

TEST_SUITE("batch norm") {
  TEST_CASE("identical rows normalize to the bias") {
    Tape tape;
    const auto x = tape.constant(Tensor::matrix({{3, -1}, {3, -1}, {3, -1}}));
    const auto bn = ops::batch_norm_train(x, tape.constant(Tensor::vector({0.25, -2})), 1e-5);
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(bn.out.value()(r, 0) == 0.25);
      CHECK(bn.out.value()(r, 1) == -2.0);
    }
  }

  TEST_CASE("unit variance input is unchanged with eps 0") {
    Tape tape;
    const auto bn = ops::batch_norm_train(tape.constant(Tensor::matrix({{-1}, {1}})), tape.constant(Tensor::vector({0})), 0.0);
    CHECK(bn.out.value() == Tensor::matrix({{-1}, {1}}));
    CHECK(bn.mean == Tensor::vector({0}));
    CHECK(bn.variance == Tensor::vector({1}));
  }

  TEST_CASE("random 8x5 batch has zero mean and unit biased variance") {
    Rng rng(31);
    const Tensor x = uniform_tensor({8, 5}, -20, 20, rng);
    Tape tape;
    const auto bn = ops::batch_norm_train(tape.constant(x), tape.constant(Tensor({5}, 0.0)), 1e-5);
    const auto stats = oracle::column_stats(bn.out.value());
    const auto raw = oracle::column_stats(x);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(std::abs(stats.mean[j]) < 1e-10);
      CHECK(std::abs(stats.variance[j] - 1.0) < 1e-6);
      CHECK(bn.mean[j] == doctest::Approx(raw.mean[j]).epsilon(1e-14));
      CHECK(bn.variance[j] == doctest::Approx(raw.variance[j]).epsilon(1e-12));
    }
  }

  TEST_CASE("fewer than two rows is a contract error") {
    Tape tape;
    CHECK_THROWS_AS(ops::batch_norm_train(tape.constant(Tensor({1, 3}, 1.0)), tape.constant(Tensor({3})), 1e-5),
                    ContractError);
  }

  TEST_CASE("inference uses the supplied statistics") {
    Tape tape;
    const auto y = ops::batch_norm_infer(tape.constant(Tensor::matrix({{5, 1}})), tape.constant(Tensor::vector({1, 0})),
                                         Tensor::vector({1, 1}), Tensor::vector({4, 1}), 0.0);
    CHECK(y.value() == Tensor::matrix({{3, 0}}));
  }
}

TEST_SUITE("losses") {
  TEST_CASE("cross-entropy against log-sum-exp oracle, ignoring unlabelled rows") {
    Rng rng(41);
    const Tensor z = uniform_tensor({4, 3}, -4, 4, rng);
    const std::vector<int> labels = {2, -1, 0, 1};
    Tape tape;
    const double got = ops::softmax_cross_entropy(tape.constant(z), labels).value()[0];
    double expected = 0.0;
    for (std::size_t r : {0u, 2u, 3u}) {
      double m = -1e300;
      for (std::size_t c = 0; c < 3; ++c) m = std::max(m, z(r, c));
      double s = 0.0;
      for (std::size_t c = 0; c < 3; ++c) s += std::exp(z(r, c) - m);
      expected += m + std::log(s) - z(r, static_cast<std::size_t>(labels[r]));
    }
    CHECK(got == doctest::Approx(expected / 3.0).epsilon(1e-13));
  }

  TEST_CASE("cross-entropy is finite for extreme logits") {
    Tape tape;
    const std::vector<int> labels = {1};
    const auto l = ops::softmax_cross_entropy(tape.constant(Tensor::matrix({{1e4, -1e4}})), labels);
    CHECK(std::isfinite(l.value()[0]));
    CHECK(l.value()[0] == doctest::Approx(2e4));
  }

  TEST_CASE("cross-entropy without labels is rejected") {
    Tape tape;
    const std::vector<int> labels = {-1, -1};
    CHECK_THROWS_AS(ops::softmax_cross_entropy(tape.constant(Tensor({2, 2})), labels), ContractError);
  }

  TEST_CASE("mean squared error") {
    Tape tape;
    const std::vector<double> targets = {1.0, 0.0};
    CHECK(ops::mean_squared_error(tape.constant(Tensor::matrix({{3}, {1}})), targets).value()[0] == 2.5);
  }
}

TEST_SUITE("gradient soundness") {
  // Builds a random expression over a small op vocabulary and compares its
  // gradient with central differences.
  struct RandomGraph {
    std::uint64_t seed;
    Var build(Tape& tape, ParamStore& store) const {
      Rng rng(seed);
      std::vector<Var> pool = {tape.param(store, "a"), tape.param(store, "b"), tape.param(store, "c")};
      for (int i = 0; i < 8; ++i) {
        const Var x = pool[rng.index(pool.size())];
        const Var y = pool[rng.index(pool.size())];
        switch (rng.index(9)) {
          case 0: pool.push_back(ops::add(x, y)); break;
          case 1: pool.push_back(ops::sub(x, y)); break;
          case 2: pool.push_back(ops::mul(x, y)); break;
          case 3: pool.push_back(ops::sigmoid(x)); break;
          case 4: pool.push_back(ops::tanh(x)); break;
          case 5: pool.push_back(ops::relu(ops::add(x, tape.constant(Tensor::scalar(0.05))))); break;
          case 6: pool.push_back(ops::matmul_bt(x, y)); break;
          case 7: pool.push_back(ops::softmax(x)); break;
          case 8: pool.push_back(ops::scale(ops::matmul(x, y), 0.5)); break;
        }
      }
      Var total = ops::sum(pool.back());
      for (std::size_t i = 3; i + 1 < pool.size(); ++i) total = ops::add(total, ops::mean(pool[i]));
      return total;
    }
  };

  TEST_CASE("random small graphs match central differences") {
    const double h = 1e-5;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 60; ++seed) {
      Rng init(1000 + seed);
      ParamStore store;
      for (const char* name : {"a", "b", "c"}) store.add(name, uniform_tensor({3, 3}, -1, 1, init));
      const RandomGraph graph{seed};
      {
        Tape tape;
        tape.backward(graph.build(tape, store));
      }
      auto loss = [&] {
        Tape tape;
        return graph.build(tape, store).value()[0];
      };
      for (auto& e : store) {
        for (std::size_t i = 0; i < e.value.size(); ++i) {
          const double keep = e.value[i];
          e.value[i] = keep + h;
          const double up = loss();
          e.value[i] = keep - h;
          const double down = loss();
          e.value[i] = keep;
          const double numeric = (up - down) / (2 * h);
          worst = std::max(worst, oracle::relative_error(e.grad[i], numeric));
        }
      }
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("batch norm and structural ops match central differences") {
    Rng init(77);
    ParamStore store;
    store.add("x", uniform_tensor({5, 4}, -2, 2, init));
    store.add("b", uniform_tensor({4}, -1, 1, init));
    store.add("v", uniform_tensor({4}, -1, 1, init));
    const Tensor w = uniform_tensor({3, 4}, -1, 1, init);
    const Tensor w2 = uniform_tensor({4, 8}, -1, 1, init);
    const std::vector<int> labels = {0, 2, -1, 1, 3};
    auto build = [&](Tape& tape) {
      const auto bn = ops::batch_norm_train(tape.param(store, "x"), tape.param(store, "b"), 1e-5);
      const auto r = ops::relu(bn.out);
      const auto top = ops::row_block(r, 1, 3);
      const auto att = ops::softmax(ops::matmul_bt(top, tape.constant(w)));
      const auto mix = ops::scale_rows(top, ops::column(att, 1));
      const auto wide = ops::concat_cols({ops::add_bias(bn.out, tape.param(store, "v")), r});
      const auto logits = ops::matmul_bt(wide, tape.constant(w2));
      const auto v = ops::reshape(tape.param(store, "v"), {1, 4});
      return ops::add(ops::add(ops::sum(mix), ops::softmax_cross_entropy(logits, labels)),
                      ops::mean(ops::matmul_bt(v, tape.param(store, "x"))));
    };
    {
      Tape tape;
      tape.backward(build(tape));
    }
    auto loss = [&] {
      Tape tape;
      return build(tape).value()[0];
    };
    const double h = 1e-5;
    double worst = 0.0;
    for (auto& e : store) {
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        const double keep = e.value[i];
        e.value[i] = keep + h;
        const double up = loss();
        e.value[i] = keep - h;
        const double down = loss();
        e.value[i] = keep;
        worst = std::max(worst, oracle::relative_error(e.grad[i], (up - down) / (2 * h)));
      }
    }
    CHECK(worst < 1e-4);
  }
}

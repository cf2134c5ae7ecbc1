#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "spikedisc/core/ops.hpp"
#include "spikedisc/core/rng.hpp"

#include "support/gradcheck.hpp"

using namespace spikedisc;
using testsupport::gradcheck;
using testsupport::random_tensor;

namespace {

// Independent 3-loop matrix product for the oracle comparisons.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int l = 0; l < k; ++l) s += a.data()[i * k + l] * b.data()[l * n + j];
      out.data()[i * n + j] = s;
    }
  return out;
}

// Direct 7-loop convolution, indexing the padded plane explicitly.
Tensor naive_conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  int Ho = (H + 2 * pad - kh) / stride + 1;
  int Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor out = Tensor::zeros({B, F, Ho, Wo});
  for (int b = 0; b < B; ++b)
    for (int f = 0; f < F; ++f)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double s = 0;
          for (int c = 0; c < C; ++c)
            for (int ki = 0; ki < kh; ++ki)
              for (int kj = 0; kj < kw; ++kj) {
                int iy = oy * stride + ki - pad;
                int ix = ox * stride + kj - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                s += x.data()[((static_cast<long>(b) * C + c) * H + iy) * W + ix] *
                     w.data()[((static_cast<long>(f) * C + c) * kh + ki) * kw + kj];
              }
          out.data()[((static_cast<long>(b) * F + f) * Ho + oy) * Wo + ox] = s;
        }
  return out;
}

bool same_values(const Tensor& a, const Tensor& b, double tol) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (std::fabs(a.data()[i] - b.data()[i]) > tol) return false;
  return true;
}

}  // namespace

TEST_CASE("matmul matches the naive product") {
  std::mt19937_64 rng = derived_rng(11, "ops", 0);
  Tensor a = random_tensor({5, 7}, rng);
  Tensor b = random_tensor({7, 4}, rng);
  REQUIRE(same_values(ops::matmul(a, b), naive_matmul(a, b), 1e-12));
}

TEST_CASE("matmul rejects mismatched inner dims") {
  REQUIRE_THROWS_AS(ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
  std::mt19937_64 rng = derived_rng(11, "ops", 1);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  double err = gradcheck(
      [&](Tape* t) {
        Tensor y = ops::matmul(a, b, t);
        return ops::sum_all(ops::mul(y, y, t), t);
      },
      {a, b});
  REQUIRE(err < 1e-6);
}

TEST_CASE("conv2d matches the direct convolution") {
  std::mt19937_64 rng = derived_rng(11, "ops", 2);
  struct Case {
    int stride, pad;
  };
  for (Case c : {Case{1, 0}, Case{1, 1}, Case{2, 1}, Case{2, 0}}) {
    Tensor x = random_tensor({2, 3, 6, 5}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    CAPTURE(c.stride, c.pad);
    REQUIRE(same_values(ops::conv2d(x, w, c.stride, c.pad), naive_conv2d(x, w, c.stride, c.pad), 1e-11));
  }
}

TEST_CASE("conv2d 1x1 kernel is a per-pixel linear map") {
  std::mt19937_64 rng = derived_rng(11, "ops", 3);
  Tensor x = random_tensor({1, 2, 3, 3}, rng);
  Tensor w = random_tensor({3, 2, 1, 1}, rng);
  REQUIRE(same_values(ops::conv2d(x, w, 1, 0), naive_conv2d(x, w, 1, 0), 1e-12));
}

TEST_CASE("conv2d rejects kernels larger than the padded input") {
  REQUIRE_THROWS_AS(ops::conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), 1, 0), DimensionError);
}

TEST_CASE("conv2d gradient matches finite differences") {
  std::mt19937_64 rng = derived_rng(11, "ops", 4);
  Tensor x = random_tensor({2, 2, 4, 4}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  double err = gradcheck(
      [&](Tape* t) {
        Tensor y = ops::conv2d(x, w, 1, 1, t);
        return ops::sum_all(ops::mul(y, y, t), t);
      },
      {x, w});
  REQUIRE(err < 1e-5);
}

TEST_CASE("maxpool2d matches a direct window scan") {
  std::mt19937_64 rng = derived_rng(11, "ops", 5);
  Tensor x = random_tensor({2, 3, 6, 6}, rng);
  Tensor y = ops::maxpool2d(x, 2);
  REQUIRE(y.shape() == Shape{2, 3, 3, 3});
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 3; ++c)
      for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 3; ++ox) {
          double best = -1e300;
          for (int ki = 0; ki < 2; ++ki)
            for (int kj = 0; kj < 2; ++kj)
              best = std::max(best, x.data()[((static_cast<long>(b) * 3 + c) * 6 + oy * 2 + ki) * 6 + ox * 2 + kj]);
          REQUIRE(y.data()[((static_cast<long>(b) * 3 + c) * 3 + oy) * 3 + ox] == best);
        }
}

TEST_CASE("maxpool2d rejects windows larger than the input") {
  REQUIRE_THROWS_AS(ops::maxpool2d(Tensor::zeros({1, 1, 2, 2}), 3), DimensionError);
}

TEST_CASE("maxpool2d routes gradient to the window argmax") {
  Tensor x = Tensor::from({1, 1, 2, 2}, {1.0, 4.0, 2.0, 3.0});
  x.set_requires_grad(true);
  Tape tape;
  Tensor y = ops::maxpool2d(x, 2, 0, &tape);
  Tensor loss = ops::sum_all(y, &tape);
  tape.backward(loss);
  REQUIRE(x.grad() == std::vector<double>{0, 1, 0, 0});
}

TEST_CASE("maxpool2d gradient matches finite differences away from ties") {
  // Spread values far enough apart that 1e-5 probes never flip an argmax.
  Tensor x = Tensor::zeros({1, 2, 4, 4});
  std::mt19937_64 rng = derived_rng(11, "ops", 6);
  std::vector<int> perm(x.numel());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < x.numel(); ++i) x.data()[i] = perm[i] * 0.1;
  double err = gradcheck(
      [&](Tape* t) {
        Tensor y = ops::maxpool2d(x, 2, 0, t);
        return ops::sum_all(ops::mul(y, y, t), t);
      },
      {x});
  REQUIRE(err < 1e-6);
}

TEST_CASE("global average pool and its gradient") {
  Tensor x = Tensor::from({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
  Tensor y = ops::avgpool_global(x);
  REQUIRE(y.shape() == Shape{1, 2});
  REQUIRE(y.data()[0] == Catch::Approx(2.5));
  REQUIRE(y.data()[1] == Catch::Approx(25.0));

  std::mt19937_64 rng = derived_rng(11, "ops", 7);
  Tensor xr = random_tensor({2, 3, 3, 2}, rng);
  double err = gradcheck(
      [&](Tape* t) {
        Tensor p = ops::avgpool_global(xr, t);
        return ops::sum_all(ops::mul(p, p, t), t);
      },
      {xr});
  REQUIRE(err < 1e-6);
}

TEST_CASE("dropout in eval mode is the identity") {
  std::mt19937_64 rng = derived_rng(11, "ops", 8);
  Tensor x = random_tensor({4, 5}, rng);
  std::mt19937_64 drop_rng = derived_rng(11, "dropout", 0);
  Tensor y = ops::dropout(x, 0.5, false, drop_rng);
  REQUIRE(same_values(x, y, 0.0));
}

TEST_CASE("dropout in train mode zeroes ~p and rescales the rest") {
  Tensor x = Tensor::full({200, 50}, 1.0);
  std::mt19937_64 drop_rng = derived_rng(11, "dropout", 1);
  double p = 0.3;
  Tensor y = ops::dropout(x, p, true, drop_rng);
  std::size_t zeros = 0;
  double sum = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    if (y.data()[i] == 0.0)
      ++zeros;
    else
      REQUIRE(y.data()[i] == Catch::Approx(1.0 / (1.0 - p)));
    sum += y.data()[i];
  }
  double zero_frac = static_cast<double>(zeros) / static_cast<double>(y.numel());
  REQUIRE(zero_frac == Catch::Approx(p).margin(0.02));
  // Inverted scaling keeps the expectation: mean stays ~1.
  REQUIRE(sum / static_cast<double>(y.numel()) == Catch::Approx(1.0).margin(0.03));
}

TEST_CASE("dropout draws are deterministic given the stream") {
  std::mt19937_64 r1 = derived_rng(5, "dropout", 9);
  std::mt19937_64 r2 = derived_rng(5, "dropout", 9);
  Tensor x = Tensor::full({10, 10}, 2.0);
  Tensor a = ops::dropout(x, 0.5, true, r1);
  Tensor b = ops::dropout(x, 0.5, true, r2);
  REQUIRE(same_values(a, b, 0.0));
}

TEST_CASE("dropout eval-mode gradient is the identity map") {
  std::mt19937_64 rng = derived_rng(11, "ops", 9);
  Tensor x = random_tensor({3, 4}, rng);
  std::mt19937_64 drop_rng = derived_rng(11, "dropout", 2);
  double err = gradcheck(
      [&](Tape* t) {
        Tensor y = ops::dropout(x, 0.4, false, drop_rng, t);
        return ops::sum_all(ops::mul(y, y, t), t);
      },
      {x});
  REQUIRE(err < 1e-6);
}

TEST_CASE("slice and stack round-trip the time axis") {
  std::mt19937_64 rng = derived_rng(11, "ops", 10);
  Tensor x = random_tensor({3, 2, 4}, rng);
  std::vector<Tensor> steps;
  for (int t = 0; t < 3; ++t) steps.push_back(ops::slice_axis0(x, t));
  REQUIRE(steps[1].shape() == Shape{2, 4});
  Tensor back = ops::stack_axis0(steps);
  REQUIRE(same_values(x, back, 0.0));
}

TEST_CASE("slice_axis0 bounds are enforced") {
  Tensor x = Tensor::zeros({2, 3});
  REQUIRE_THROWS_AS(ops::slice_axis0(x, 2), DimensionError);
  REQUIRE_THROWS_AS(ops::slice_axis0(x, -1), DimensionError);
}

TEST_CASE("stack and slice gradients match finite differences") {
  std::mt19937_64 rng = derived_rng(11, "ops", 11);
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({2, 3}, rng);
  double err = gradcheck(
      [&](Tape* t) {
        Tensor s = ops::stack_axis0({a, b}, t);
        Tensor first = ops::slice_axis0(s, 0, t);
        Tensor second = ops::slice_axis0(s, 1, t);
        return ops::sum_all(ops::mul(first, second, t), t);
      },
      {a, b});
  REQUIRE(err < 1e-6);
}

TEST_CASE("concat_cols places blocks side by side") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 3}, {5, 6, 7, 8, 9, 10});
  Tensor c = ops::concat_cols(a, b);
  REQUIRE(c.shape() == Shape{2, 5});
  REQUIRE(c.data()[0] == 1.0);
  REQUIRE(c.data()[2] == 5.0);
  REQUIRE(c.data()[5] == 3.0);
  REQUIRE(c.data()[9] == 10.0);
}

TEST_CASE("concat_cols gradient matches finite differences") {
  std::mt19937_64 rng = derived_rng(11, "ops", 12);
  Tensor a = random_tensor({2, 2}, rng);
  Tensor b = random_tensor({2, 3}, rng);
  double err = gradcheck(
      [&](Tape* t) {
        Tensor c = ops::concat_cols(a, b, t);
        return ops::sum_all(ops::mul(c, c, t), t);
      },
      {a, b});
  REQUIRE(err < 1e-6);
}

TEST_CASE("reshape and flatten preserve data and reject bad sizes") {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = ops::reshape(x, {3, 2});
  REQUIRE(r.shape() == Shape{3, 2});
  REQUIRE(r.data()[5] == 6.0);
  REQUIRE_THROWS_AS(ops::reshape(x, {4, 2}), DimensionError);

  Tensor f = ops::flatten(Tensor::from({2, 2, 1, 1}, {1, 2, 3, 4}));
  REQUIRE(f.shape() == Shape{2, 2});
}

TEST_CASE("add_rowvec broadcasts the bias row") {
  Tensor x = Tensor::from({2, 3}, {0, 0, 0, 1, 1, 1});
  Tensor b = Tensor::from({3}, {10, 20, 30});
  Tensor y = ops::add_rowvec(x, b);
  REQUIRE(y.data()[0] == 10.0);
  REQUIRE(y.data()[4] == 21.0);

  std::mt19937_64 rng = derived_rng(11, "ops", 13);
  Tensor xr = random_tensor({3, 4}, rng);
  Tensor br = random_tensor({4}, rng);
  double err = gradcheck(
      [&](Tape* t) {
        Tensor s = ops::add_rowvec(xr, br, t);
        return ops::sum_all(ops::mul(s, s, t), t);
      },
      {xr, br});
  REQUIRE(err < 1e-6);
}

TEST_CASE("mean_list averages and is exact on identical dyadic inputs") {
  // Pairwise tree over equal tensors: every add doubles exactly, and the
  // final 1/n is exact for dyadic n, so mean(x, x, x, x) == x bitwise.
  std::mt19937_64 rng = derived_rng(11, "ops", 14);
  Tensor x = random_tensor({2, 3}, rng);
  Tensor m = ops::mean_list({x, x, x, x});
  REQUIRE(same_values(m, x, 0.0));

  // Against a plain sequential mean for mixed inputs.
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({2, 3}, rng);
  Tensor c = random_tensor({2, 3}, rng);
  Tensor tree = ops::mean_list({a, b, c});
  for (std::size_t i = 0; i < tree.numel(); ++i) {
    double naive = (a.data()[i] + b.data()[i] + c.data()[i]) / 3.0;
    REQUIRE(tree.data()[i] == Catch::Approx(naive).epsilon(1e-14));
  }
}

TEST_CASE("mean_list gradient distributes 1/n to every input") {
  std::mt19937_64 rng = derived_rng(11, "ops", 15);
  Tensor a = random_tensor({2, 2}, rng);
  Tensor b = random_tensor({2, 2}, rng);
  Tensor c = random_tensor({2, 2}, rng);
  double err = gradcheck(
      [&](Tape* t) {
        Tensor m = ops::mean_list({a, b, c}, t);
        return ops::sum_all(ops::mul(m, m, t), t);
      },
      {a, b, c});
  REQUIRE(err < 1e-6);
}

TEST_CASE("l2_normalize_rows yields unit rows and keeps direction") {
  std::mt19937_64 rng = derived_rng(11, "ops", 16);
  Tensor x = random_tensor({4, 6}, rng);
  Tensor y = ops::l2_normalize_rows(x);
  for (int i = 0; i < 4; ++i) {
    double n = 0, dot = 0, xn = 0;
    for (int j = 0; j < 6; ++j) {
      n += y.data()[i * 6 + j] * y.data()[i * 6 + j];
      dot += y.data()[i * 6 + j] * x.data()[i * 6 + j];
      xn += x.data()[i * 6 + j] * x.data()[i * 6 + j];
    }
    REQUIRE(std::sqrt(n) == Catch::Approx(1.0).epsilon(1e-12));
    // Same direction: dot(y, x) == |x|.
    REQUIRE(dot == Catch::Approx(std::sqrt(xn)).epsilon(1e-12));
  }
}

TEST_CASE("l2_normalize_rows raises on zero rows, naming them") {
  Tensor x = Tensor::zeros({3, 4});
  x.data()[0] = 1.0;  // row 0 fine, rows 1 and 2 zero
  try {
    ops::l2_normalize_rows(x);
    FAIL("expected DegenerateEmbedding");
  } catch (const DegenerateEmbedding& e) {
    std::string msg = e.what();
    REQUIRE(msg.find('1') != std::string::npos);
    REQUIRE(msg.find('2') != std::string::npos);
  }
}

TEST_CASE("l2_normalize_cols raises on a zero column") {
  Tensor w = Tensor::from({2, 2}, {1, 0, 2, 0});
  REQUIRE_THROWS_AS(ops::l2_normalize_cols(w), DegenerateEmbedding);
}

TEST_CASE("row normalization is bit-identical under exact positive scalings") {
  std::mt19937_64 rng = derived_rng(11, "ops", 17);
  Tensor x = random_tensor({3, 5}, rng);
  Tensor base = ops::l2_normalize_rows(x);
  for (double c : {2.0, 0.5, 1024.0, 0.001953125}) {
    Tensor xs = x.clone();
    for (std::size_t i = 0; i < xs.numel(); ++i) xs.data()[i] *= c;  // dyadic: exact
    Tensor ys = ops::l2_normalize_rows(xs);
    REQUIRE(std::memcmp(ys.data(), base.data(), base.numel() * sizeof(double)) == 0);
  }

  // Small-integer scaling of dyadic data (e.g. spike counts) is exact too.
  Tensor counts = Tensor::from({2, 3}, {1, 2, 0.5, 3, 4, 0.25});
  Tensor cbase = ops::l2_normalize_rows(counts);
  Tensor c3 = counts.clone();
  for (std::size_t i = 0; i < c3.numel(); ++i) c3.data()[i] *= 3.0;
  Tensor y3 = ops::l2_normalize_rows(c3);
  REQUIRE(std::memcmp(y3.data(), cbase.data(), cbase.numel() * sizeof(double)) == 0);
}

TEST_CASE("column normalization is bit-identical under exact positive scalings") {
  std::mt19937_64 rng = derived_rng(11, "ops", 18);
  Tensor w = random_tensor({5, 3}, rng);
  Tensor base = ops::l2_normalize_cols(w);
  Tensor ws = w.clone();
  for (int i = 0; i < 5; ++i) ws.data()[i * 3 + 1] *= 4.0;  // scale one column
  Tensor ys = ops::l2_normalize_cols(ws);
  REQUIRE(std::memcmp(ys.data(), base.data(), base.numel() * sizeof(double)) == 0);
}

TEST_CASE("l2 normalization gradients match finite differences") {
  std::mt19937_64 rng = derived_rng(11, "ops", 19);
  Tensor x = random_tensor({3, 4}, rng, 0.5, 2.0);
  double err_rows = gradcheck(
      [&](Tape* t) {
        Tensor y = ops::l2_normalize_rows(x, t);
        // A non-uniform weighting, otherwise the unit-norm constraint makes
        // the loss constant and every gradient zero.
        Tensor probe = Tensor::zeros({3, 4});
        for (std::size_t i = 0; i < probe.numel(); ++i) probe.data()[i] = 0.1 * static_cast<double>(i + 1);
        return ops::sum_all(ops::mul(y, probe, t), t);
      },
      {x});
  REQUIRE(err_rows < 1e-6);

  Tensor w = random_tensor({4, 3}, rng, 0.5, 2.0);
  double err_cols = gradcheck(
      [&](Tape* t) {
        Tensor y = ops::l2_normalize_cols(w, t);
        Tensor probe = Tensor::zeros({4, 3});
        for (std::size_t i = 0; i < probe.numel(); ++i) probe.data()[i] = 0.1 * static_cast<double>(i + 1);
        return ops::sum_all(ops::mul(y, probe, t), t);
      },
      {w});
  REQUIRE(err_cols < 1e-6);
}

TEST_CASE("has_nan detects contamination") {
  Tensor x = Tensor::zeros({2, 2});
  REQUIRE_FALSE(ops::has_nan(x));
  x.data()[3] = std::nan("");
  REQUIRE(ops::has_nan(x));
}

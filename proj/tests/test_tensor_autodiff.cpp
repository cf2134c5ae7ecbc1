#include <catch2/catch_amalgamated.hpp>

#include "spikedisc/core/ops.hpp"
#include "spikedisc/core/rng.hpp"
#include "spikedisc/core/tensor.hpp"

#include "support/gradcheck.hpp"

using namespace spikedisc;

TEST_CASE("tensor construction and element access") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  REQUIRE(t.ndim() == 2);
  REQUIRE(t.dim(0) == 2);
  REQUIRE(t.dim(1) == 3);
  REQUIRE(t.numel() == 6);
  REQUIRE(t.data()[4] == 5.0);

  Tensor z = Tensor::zeros({4});
  for (std::size_t i = 0; i < z.numel(); ++i) REQUIRE(z.data()[i] == 0.0);

  Tensor f = Tensor::full({2, 2}, 3.5);
  REQUIRE(f.data()[3] == 3.5);

  REQUIRE(Tensor::scalar(7.0).item() == 7.0);
}

TEST_CASE("tensor from rejects mismatched payload") {
  REQUIRE_THROWS_AS(Tensor::from({2, 3}, {1, 2, 3}), DimensionError);
}

TEST_CASE("item requires a single element") {
  Tensor t = Tensor::from({2}, {1, 2});
  REQUIRE_THROWS_AS(t.item(), ContractError);
}

TEST_CASE("tensors are shared handles; clone detaches") {
  Tensor a = Tensor::from({2}, {1, 2});
  Tensor b = a;
  REQUIRE(a.same_storage(b));
  b.data()[0] = 9;
  REQUIRE(a.data()[0] == 9.0);

  Tensor c = a.clone();
  REQUIRE_FALSE(c.same_storage(a));
  c.data()[0] = 1;
  REQUIRE(a.data()[0] == 9.0);
}

TEST_CASE("undefined tensor refuses use") {
  Tensor t;
  REQUIRE_FALSE(t.defined());
  REQUIRE_THROWS_AS(t.numel(), ContractError);
}

TEST_CASE("gradient storage is lazily allocated and zeroed") {
  Tensor t = Tensor::from({3}, {1, 2, 3});
  REQUIRE_FALSE(t.has_grad());
  t.grad_data()[1] = 5.0;
  REQUIRE(t.has_grad());
  REQUIRE(t.grad()[0] == 0.0);
  REQUIRE(t.grad()[1] == 5.0);
  t.zero_grad();
  REQUIRE(t.grad()[1] == 0.0);
}

TEST_CASE("backward needs a scalar loss that requires grad") {
  Tape tape;
  Tensor v = Tensor::from({2}, {1, 2});
  REQUIRE_THROWS_AS(tape.backward(v), ContractError);

  Tensor s = Tensor::scalar(1.0);
  REQUIRE_THROWS_AS(tape.backward(s), ContractError);
}

TEST_CASE("tape replays nodes in reverse and accumulates") {
  // loss = sum(a*a + a) touches a through two paths; gradient must sum both.
  Tensor a = Tensor::from({3}, {1.0, -2.0, 0.5});
  a.set_requires_grad(true);
  Tape tape;
  Tensor sq = ops::mul(a, a, &tape);
  Tensor both = ops::add(sq, a, &tape);
  Tensor loss = ops::sum_all(both, &tape);
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) REQUIRE(a.grad()[i] == Catch::Approx(2 * a.data()[i] + 1).epsilon(1e-12));
}

TEST_CASE("ops without a tape record nothing") {
  Tensor a = Tensor::from({2}, {1, 2});
  a.set_requires_grad(true);
  Tape tape;
  Tensor b = ops::mul(a, a, nullptr);
  REQUIRE(tape.size() == 0);
  REQUIRE_FALSE(b.requires_grad());
}

TEST_CASE("requires_grad propagates through tracked ops") {
  Tensor a = Tensor::from({2}, {1, 2});
  Tensor b = Tensor::from({2}, {3, 4});
  a.set_requires_grad(true);
  Tape tape;
  Tensor c = ops::add(a, b, &tape);
  REQUIRE(c.requires_grad());
}

TEST_CASE("derived rng streams are deterministic and purpose-separated") {
  std::mt19937_64 a = derived_rng(42, "shuffle", 3);
  std::mt19937_64 b = derived_rng(42, "shuffle", 3);
  REQUIRE(a() == b());

  std::mt19937_64 c = derived_rng(42, "dropout", 3);
  std::mt19937_64 d = derived_rng(42, "shuffle", 4);
  std::mt19937_64 e = derived_rng(43, "shuffle", 3);
  std::mt19937_64 f = derived_rng(42, "shuffle", 3);
  auto first = f();
  REQUIRE(c() != first);
  REQUIRE(d() != first);
  REQUIRE(e() != first);
}

TEST_CASE("fnv1a64 matches reference digests") {
  // Reference values computed from the FNV-1a definition (offset basis
  // 0xcbf29ce484222325, prime 0x100000001b3).
  REQUIRE(fnv1a64("") == 0xcbf29ce484222325ull);
  REQUIRE(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  REQUIRE(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("elementwise chain matches finite differences") {
  std::mt19937_64 rng = derived_rng(7, "gradcheck", 0);
  Tensor a = testsupport::random_tensor({3, 4}, rng);
  Tensor b = testsupport::random_tensor({3, 4}, rng);
  double err = testsupport::gradcheck(
      [&](Tape* tape) {
        Tensor s = ops::sub(ops::mul(a, b, tape), ops::scale(a, 0.3, tape), tape);
        return ops::sum_all(ops::mul(s, s, tape), tape);
      },
      {a, b});
  REQUIRE(err < 1e-6);
}

// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "criteria.hpp"
#include "support.hpp"

using namespace vqt;
using namespace vqt::testing;

TEST_CASE("quantization semantics hold on 1e5 queries", "[vq]") {
  auto r = acceptance::vq_numbers(100000, 5);
  CHECK(r.mismatches == 0);
  CHECK(r.st_value_err < 1e-12);
  CHECK(r.st_grad_exact);
  CHECK(r.cb_grad_err < 1e-12);
  CHECK(r.commit_grad_err < 1e-12);
  CHECK(r.sg_paths_zero);
}

TEST_CASE("ties resolve to the lowest index", "[vq]") {
  Codebook cb(Tensor::from({3, 1}, {1.0, -1.0, 1.0}));
  CHECK(cb.nearest(std::vector<double>{0.0}) == 0);
  CHECK(cb.nearest(std::vector<double>{0.9}) == 0);
  CHECK(cb.nearest(std::vector<double>{-0.1}) == 1);
}

TEST_CASE("usage counting only on request", "[vq]") {
  std::mt19937_64 rng(1);
  Codebook cb(8, 4, rng);
  auto z = random_tensor({20, 4}, rng, -1, 1, false);
  quantize(z, cb, false);
  CHECK(cb.total_usage() == 0);
  CHECK(cb.unused_codes() == 8);
  auto q = quantize(z, cb, true);
  CHECK(cb.total_usage() == 20);
  for (std::size_t i : q.indices) CHECK(cb.usage_counts()[i] > 0);
  cb.reset_usage();
  CHECK(cb.total_usage() == 0);
}

TEST_CASE("codebook init is bounded and seeded", "[vq]") {
  std::mt19937_64 a(9), b(9);
  Codebook x(32, 16, a), y(32, 16, b);
  const double bound = std::sqrt(16.0) / 32.0;
  for (std::size_t i = 0; i < x.embeddings().numel(); ++i) {
    CHECK(std::abs(x.embeddings()[i]) <= bound);
    CHECK(x.embeddings()[i] == y.embeddings()[i]);
  }
  CHECK_THROWS_AS(Codebook(0, 4, a), std::invalid_argument);
}

TEST_CASE("quantize rejects mismatched latent width", "[vq]") {
  std::mt19937_64 rng(1);
  Codebook cb(4, 3, rng);
  CHECK_THROWS_AS(quantize(Tensor::zeros({2, 5}), cb), DimensionError);
}

TEST_CASE("losses equal their closed forms", "[vq]") {
  auto z = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 2.0});
  auto q = Tensor::from({2, 2}, {0.0, 0.0, 0.0, 0.0});
  // (1 + 4) / 2 rows
  CHECK(codebook_loss(z, q).item() == Catch::Approx(2.5));
  CHECK(commitment_loss(z, q).item() == Catch::Approx(2.5));
}

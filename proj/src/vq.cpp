// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/vq.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "vqtimbre/ops.hpp"
#include "vqtimbre/params.hpp"

namespace vqt {

Codebook::Codebook(std::size_t size, std::size_t dim, std::mt19937_64& rng,
                   double init_scale) {
  if (size == 0 || dim == 0) throw std::invalid_argument("codebook needs K >= 1 and d_z >= 1");
  const double bound = init_scale * std::sqrt(static_cast<double>(dim)) / static_cast<double>(size);
  embeddings_ = uniform_tensor({size, dim}, bound, rng, true);
  usage_.assign(size, 0);
}

Codebook::Codebook(Tensor embeddings) : embeddings_(std::move(embeddings)) {
  if (embeddings_.rank() != 2 || embeddings_.dim(0) == 0) {
    throw DimensionError("codebook embeddings must be [K x d_z], got " +
                         shape_str(embeddings_.shape()));
  }
  usage_.assign(embeddings_.dim(0), 0);
}

std::span<const double> Codebook::row(std::size_t k) const {
  return embeddings_.data().subspan(k * dim(), dim());
}

std::size_t Codebook::nearest(std::span<const double> z) const {
  const std::size_t d = dim();
  if (z.size() != d) {
    throw DimensionError("quantize: latent of size " + std::to_string(z.size()) +
                         " vs codebook dim " + std::to_string(d));
  }
  auto e = embeddings_.data();
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < size(); ++k) {
    double dist = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = z[j] - e[k * d + j];
      dist += diff * diff;
    }
    if (dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return best;
}

std::uint64_t Codebook::total_usage() const {
  std::uint64_t n = 0;
  for (auto c : usage_) n += c;
  return n;
}

std::size_t Codebook::unused_codes() const {
  std::size_t n = 0;
  for (auto c : usage_) n += c == 0 ? 1 : 0;
  return n;
}

void Codebook::reset_usage() { usage_.assign(size(), 0); }

namespace {

std::vector<std::size_t> nearest_rows(const Tensor& z, const Codebook& codebook) {
  if (z.rank() != 2 || z.dim(1) != codebook.dim()) {
    throw DimensionError("quantize: latents " + shape_str(z.shape()) + " vs codebook " +
                         shape_str(codebook.embeddings().shape()));
  }
  const std::size_t rows = z.dim(0), d = z.dim(1);
  std::vector<std::size_t> idx(rows);
  for (std::size_t t = 0; t < rows; ++t) {
    auto zr = z.data().subspan(t * d, d);
    for (double v : zr) {
      if (!std::isfinite(v)) {
        throw NumericError("quantize: non-finite latent at frame " + std::to_string(t));
      }
    }
    idx[t] = codebook.nearest(zr);
  }
  return idx;
}

Quantized assemble(const Tensor& z, const Codebook& codebook, std::vector<std::size_t> idx) {
  Quantized q;
  q.selected = gather_rows(codebook.embeddings(), idx);
  q.straight_through = straight_through(z, q.selected);
  q.indices = std::move(idx);
  return q;
}

}  // namespace

Quantized quantize(const Tensor& z, Codebook& codebook, bool count_usage) {
  auto idx = nearest_rows(z, codebook);
  if (count_usage) {
    for (auto k : idx) ++codebook.usage_counts()[k];
  }
  return assemble(z, codebook, std::move(idx));
}

Quantized quantize(const Tensor& z, const Codebook& codebook) {
  return assemble(z, codebook, nearest_rows(z, codebook));
}

Tensor straight_through(const Tensor& z, const Tensor& selected) {
  if (z.shape() != selected.shape()) {
    throw DimensionError("straight_through: " + shape_str(z.shape()) + " vs " +
                         shape_str(selected.shape()));
  }
  std::vector<double> values(selected.data().begin(), selected.data().end());
  return detail::make_result("straight_through", z.shape(), std::move(values), {z},
                             [](detail::Node& self) {
                               auto& in = *self.inputs[0];
                               if (!in.requires_grad) return;
                               auto& g = in.ensure_grad();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                             });
}

namespace {
double rows_of(const Tensor& z) { return z.rank() == 2 ? static_cast<double>(z.dim(0)) : 1.0; }
}  // namespace

Tensor codebook_loss(const Tensor& z, const Tensor& selected) {
  return scale(squared_l2(sub(stop_gradient(z), selected)), 1.0 / rows_of(z));
}

Tensor commitment_loss(const Tensor& z, const Tensor& selected) {
  return scale(squared_l2(sub(z, stop_gradient(selected))), 1.0 / rows_of(z));
}

}  // namespace vqt

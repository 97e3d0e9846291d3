#include "handtraj/model/gradcheck.hpp"

#include <cmath>
#include <numeric>

namespace handtraj::model {

template <typename Real>
std::vector<GroupCheck> gradient_check(const HandModel<Real>& model, std::span<const Example* const> batch,
                                       std::uint64_t noise_seed, std::size_t max_per_group, double step,
                                       std::uint64_t seed) {
  nn::Grads<Real> analytic;
  batch_gradient<Real>(model, batch, noise_seed, analytic, false);
  HandModel<double> ref = model.template cast<double>();
  auto loss_at = [&] {
    Rng root(noise_seed);
    double total = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Rng rng = root.fork(i);
      nn::Tape<double> tape(&ref.params());
      total += tape.scalar(ref.loss(tape, *batch[i], rng));
    }
    return total / static_cast<double>(batch.size());
  };
  Rng rng(seed);
  std::vector<GroupCheck> out;
  for (std::size_t p = 0; p < ref.params().size(); ++p) {
    auto& values = ref.params()[p].data;
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (idx.size() > max_per_group) {
      rng.shuffle(idx);
      idx.resize(max_per_group);
    }
    GroupCheck gc{ref.params().name(p), idx.size(), 0, 0};
    double diff = 0, na = 0, nf = 0;
    for (std::size_t k : idx) {
      const double orig = values[k];
      values[k] = orig + step;
      const double up = loss_at();
      values[k] = orig - step;
      const double down = loss_at();
      values[k] = orig;
      const double fd = (up - down) / (2 * step);
      const double a = static_cast<double>(analytic[p].data[k]);
      diff += (a - fd) * (a - fd);
      na += a * a;
      nf += fd * fd;
    }
    gc.analytic_norm = std::sqrt(na);
    const double scale = std::max(std::sqrt(na), std::sqrt(nf));
    gc.rel_error = scale > 1e-12 ? std::sqrt(diff) / scale : std::sqrt(diff);
    out.push_back(gc);
  }
  return out;
}

template std::vector<GroupCheck> gradient_check(const HandModel<float>&, std::span<const Example* const>,
                                                std::uint64_t, std::size_t, double, std::uint64_t);
template std::vector<GroupCheck> gradient_check(const HandModel<double>&, std::span<const Example* const>,
                                                std::uint64_t, std::size_t, double, std::uint64_t);

}  // namespace handtraj::model

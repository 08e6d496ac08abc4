#include "fedkd/analysis.hpp"

#include <cmath>
#include <stdexcept>

namespace fedkd {

double hoeffding_term(double p, std::size_t n_samples) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("hoeffding_term: p must be in (0, 1)");
  if (n_samples < 1) throw std::invalid_argument("hoeffding_term: n_samples must be >= 1");
  return std::sqrt(std::log(2.0 / p) / (2.0 * static_cast<double>(n_samples)));
}

void CommReport::add(const CommRoundEntry& entry) {
  rounds.push_back(entry);
  total_upload += entry.upload;
  total_download += entry.download;
}

CommRoundEntry comm_cost(Method method, std::size_t ws, std::size_t wl, int num_classes,
                         int n_active, int n_active_strong, std::size_t public_pool_size,
                         bool feddf_large) {
  if (n_active < 0 || n_active_strong < 0)
    throw std::invalid_argument("comm_cost: negative participation count");
  const auto a = static_cast<std::uint64_t>(n_active);
  const auto k = static_cast<std::uint64_t>(n_active_strong);
  const std::uint64_t logits = static_cast<std::uint64_t>(num_classes) * public_pool_size;

  CommRoundEntry e;
  e.n_active = n_active;
  e.n_active_strong = n_active_strong;
  switch (method) {
    case Method::proposed:
      // Aux round: every active client exchanges w_s. Target round: each
      // participant downloads w_s + w_l and uploads w_l.
      e.per_weak = {ws, ws};
      e.strong_target_phase = {wl, ws + wl};
      e.per_strong = {ws + wl, ws + (ws + wl)};
      e.upload = a * ws + k * wl;
      e.download = a * ws + k * (ws + wl);
      break;
    case Method::fedavg_weak_only:
      e.per_weak = {ws, ws};
      e.per_strong = {ws, ws};  // strong clients join as ordinary clients
      e.upload = a * ws;
      e.download = a * ws;
      break;
    case Method::fedavg_strong_only:
      e.per_strong = {wl, wl};
      e.upload = k * wl;
      e.download = k * wl;
      break;
    case Method::feddf: {
      // Model exchange only; the server-side KD consumes no communication.
      const std::size_t w = feddf_large ? wl : ws;
      const std::uint64_t participants = feddf_large ? k : a;
      if (!feddf_large) e.per_weak = {w, w};
      e.per_strong = {w, w};
      e.upload = participants * w;
      e.download = participants * w;
      break;
    }
    case Method::dsfl:
    case Method::fedmd:
      e.per_weak = {logits, logits};
      e.per_strong = {logits, logits};
      e.upload = a * logits;
      e.download = a * logits;
      break;
  }
  return e;
}

BoundReport bound_report(const std::vector<MeasuredClientLoss>& losses, double p,
                         std::optional<double> discrepancy_placeholder) {
  BoundReport report;
  report.p = p;
  double loss_sum = 0.0;
  double term_sum = 0.0;
  for (const auto& m : losses) {
    ClientBoundTerms terms;
    terms.client_id = m.client_id;
    terms.empirical_loss = m.empirical_loss;
    terms.n_labeled = m.n_labeled;
    terms.n_tilde = m.n_labeled + m.n_unlabeled;
    terms.sample_term = hoeffding_term(p, terms.n_tilde);
    terms.discrepancy = discrepancy_placeholder;
    terms.v_i = std::nullopt;
    loss_sum += terms.empirical_loss;
    term_sum += terms.sample_term;
    report.clients.push_back(terms);
  }
  if (!report.clients.empty()) {
    report.mean_empirical_loss = loss_sum / static_cast<double>(report.clients.size());
    report.mean_sample_term = term_sum / static_cast<double>(report.clients.size());
  }
  report.mean_discrepancy = discrepancy_placeholder;
  // v_i is never available, so the report is always a partial bound.
  report.partial = true;
  return report;
}

}  // namespace fedkd

#include "conic/downstream/gbt.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace conic {

double RegressionTree::predict(std::span<const double> row) const {
  int k = 0;
  while (!nodes[k].is_leaf()) {
    const auto& n = nodes[k];
    const double v = row[static_cast<std::size_t>(n.feature)];
    const bool left = std::isnan(v) ? n.default_left : v < n.threshold;
    k = left ? n.left : n.right;
  }
  return nodes[k].value;
}

int RegressionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    best = std::max(best, d[k]);
    if (!nodes[k].is_leaf()) {
      d[nodes[k].left] = d[k] + 1;
      d[nodes[k].right] = d[k] + 1;
    }
  }
  return best;
}

bool RegressionTree::uses_feature(int feature) const {
  return std::any_of(nodes.begin(), nodes.end(),
                     [&](const TreeNode& n) { return n.feature == feature; });
}

bool GbtModel::uses_feature(int feature) const {
  return std::any_of(trees.begin(), trees.end(), [&](const RegressionTree& t) {
    return t.weight != 0.0 && t.uses_feature(feature);
  });
}

// ---------------------------------------------------------------------------
// Objectives

double softmax_loss(std::span<const int> labels, std::span<const double> margins, int k) {
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* m = margins.data() + i * static_cast<std::size_t>(k);
    const double mx = *std::max_element(m, m + k);
    double z = 0.0;
    for (int c = 0; c < k; ++c) z += std::exp(m[c] - mx);
    loss += mx + std::log(z) - m[labels[i]];
  }
  return loss;
}

void softmax_gradients(std::span<const int> labels, std::span<const double> margins, int k,
                       std::vector<double>& grad, std::vector<double>& hess) {
  const std::size_t n = labels.size();
  grad.assign(n * static_cast<std::size_t>(k), 0.0);
  hess.assign(n * static_cast<std::size_t>(k), 0.0);
  std::vector<double> p(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const double* m = margins.data() + i * static_cast<std::size_t>(k);
    const double mx = *std::max_element(m, m + k);
    double z = 0.0;
    for (int c = 0; c < k; ++c) z += (p[c] = std::exp(m[c] - mx));
    for (int c = 0; c < k; ++c) {
      const double pc = p[c] / z;
      const std::size_t at = i * static_cast<std::size_t>(k) + static_cast<std::size_t>(c);
      grad[at] = pc - (labels[i] == c ? 1.0 : 0.0);
      hess[at] = std::max(pc * (1.0 - pc), 1e-16);
    }
  }
}

namespace {

// Indices sorted by time, grouped into runs of equal time.
std::vector<std::size_t> time_order(std::span<const SurvivalRecord> s) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s[a].time < s[b].time; });
  return order;
}

// Risk-set sums S(t_i) = sum over t_j >= t_i of exp(f_j - shift), by index.
std::vector<double> risk_sums(std::span<const SurvivalRecord> s, std::span<const double> f,
                              const std::vector<std::size_t>& order, double shift) {
  std::vector<double> out(s.size(), 0.0);
  double acc = 0.0;
  std::size_t end = order.size();
  while (end > 0) {
    std::size_t begin = end - 1;
    while (begin > 0 && s[order[begin - 1]].time == s[order[end - 1]].time) --begin;
    for (std::size_t q = begin; q < end; ++q) acc += std::exp(f[order[q]] - shift);
    for (std::size_t q = begin; q < end; ++q) out[order[q]] = acc;
    end = begin;
  }
  return out;
}

}  // namespace

double cox_loss(std::span<const SurvivalRecord> s, std::span<const double> f) {
  if (s.empty()) return 0.0;
  const double shift = *std::max_element(f.begin(), f.end());
  const auto order = time_order(s);
  const auto sums = risk_sums(s, f, order, shift);
  double loss = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s[i].event) continue;
    loss += shift + std::log(sums[i]) - f[i];
  }
  return loss;
}

void cox_gradients(std::span<const SurvivalRecord> s, std::span<const double> f,
                   std::vector<double>& grad, std::vector<double>& hess) {
  const std::size_t n = s.size();
  grad.assign(n, 0.0);
  hess.assign(n, 0.0);
  if (n == 0) return;
  const double shift = *std::max_element(f.begin(), f.end());
  const auto order = time_order(s);
  const auto sums = risk_sums(s, f, order, shift);
  // Ascending in time: a = sum 1/S_i, b = sum 1/S_i^2 over events with
  // t_i <= t_k, ties included.
  double a = 0.0, b = 0.0;
  std::size_t begin = 0;
  while (begin < n) {
    std::size_t end = begin + 1;
    while (end < n && s[order[end]].time == s[order[begin]].time) ++end;
    for (std::size_t q = begin; q < end; ++q) {
      const std::size_t i = order[q];
      if (s[i].event) {
        a += 1.0 / sums[i];
        b += 1.0 / (sums[i] * sums[i]);
      }
    }
    for (std::size_t q = begin; q < end; ++q) {
      const std::size_t k = order[q];
      const double e = std::exp(f[k] - shift);
      grad[k] = e * a - (s[k].event ? 1.0 : 0.0);
      hess[k] = std::max(e * a - e * e * b, 1e-16);
    }
    begin = end;
  }
}

// ---------------------------------------------------------------------------
// Tree growing

namespace {

constexpr double kMinGain = 1e-12;

double soft_threshold(double g, double alpha) {
  if (g > alpha) return g - alpha;
  if (g < -alpha) return g + alpha;
  return 0.0;
}

struct Presorted {
  std::vector<std::vector<std::uint32_t>> sorted;   // non-missing rows by value
  std::vector<std::vector<double>> values;          // their values
  std::vector<std::vector<std::uint32_t>> missing;  // rows with NaN

  explicit Presorted(const DenseMatrix& x)
      : sorted(x.cols()), values(x.cols()), missing(x.cols()) {
    for (std::size_t f = 0; f < x.cols(); ++f) {
      auto& s = sorted[f];
      for (std::size_t r = 0; r < x.rows(); ++r) {
        if (std::isnan(x(r, f))) {
          missing[f].push_back(static_cast<std::uint32_t>(r));
        } else {
          s.push_back(static_cast<std::uint32_t>(r));
        }
      }
      std::stable_sort(s.begin(), s.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
      values[f].reserve(s.size());
      for (std::uint32_t r : s) values[f].push_back(x(r, f));
    }
  }
};

std::vector<int> sample_columns(const std::vector<int>& from, double frac, std::mt19937_64& rng) {
  if (frac >= 1.0 || from.size() <= 1) return from;
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(frac * static_cast<double>(from.size()))));
  std::vector<int> pool = from;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

struct SplitCandidate {
  double gain = 0.0;  // children score sum while searching
  int feature = -1;
  double threshold = 0.0;
  bool default_left = true;
};

class TreeGrower {
 public:
  TreeGrower(const DenseMatrix& x, const Presorted& ps, const GbtHyperparams& p)
      : x_(x), ps_(ps), p_(p) {}

  RegressionTree grow(std::span<const double> g, std::span<const double> h,
                      const std::vector<char>& row_used, const std::vector<int>& tree_features,
                      std::mt19937_64& rng) {
    const std::size_t n = x_.rows();
    const std::size_t nf = x_.cols();
    RegressionTree tree;
    std::vector<int> pos(n, -1);
    std::vector<double> node_g{0.0}, node_h{0.0};
    for (std::size_t r = 0; r < n; ++r) {
      if (!row_used[r]) continue;
      pos[r] = 0;
      node_g[0] += g[r];
      node_h[0] += h[r];
    }
    tree.nodes.emplace_back();
    std::vector<int> active{0};

    for (int depth = 0; depth < p_.max_depth && !active.empty(); ++depth) {
      std::erase_if(active, [&](int node) {
        return node_h[node] < 2.0 * p_.min_child_weight || node_h[node] <= 0.0;
      });
      if (active.empty()) break;
      const auto level_features = sample_columns(tree_features, p_.colsample_bylevel, rng);
      const std::size_t na = active.size();
      std::vector<int> slot_of(tree.nodes.size(), -1);
      for (std::size_t s = 0; s < na; ++s) slot_of[active[s]] = static_cast<int>(s);
      std::vector<char> allowed(na * nf, 0);
      for (std::size_t s = 0; s < na; ++s) {
        for (int f : sample_columns(level_features, p_.colsample_bynode, rng)) {
          allowed[s * nf + static_cast<std::size_t>(f)] = 1;
        }
      }

      std::vector<int> row_slot(n, -1);
      for (std::size_t r = 0; r < n; ++r) {
        if (pos[r] >= 0) row_slot[r] = slot_of[pos[r]];
      }

      std::vector<SplitCandidate> best(na);
      std::vector<double> parent_score(na);
      for (std::size_t s = 0; s < na; ++s) {
        parent_score[s] = score(node_g[active[s]], node_h[active[s]]);
        best[s].gain = parent_score[s] + 2.0 * kMinGain;
      }
      std::vector<double> gm(na), hm(na), gl(na), hl(na), last(na);
      std::vector<char> has_missing(na), seen(na);
      for (int f : level_features) {
        const auto fu = static_cast<std::size_t>(f);
        std::fill(gm.begin(), gm.end(), 0.0);
        std::fill(hm.begin(), hm.end(), 0.0);
        std::fill(gl.begin(), gl.end(), 0.0);
        std::fill(hl.begin(), hl.end(), 0.0);
        std::fill(has_missing.begin(), has_missing.end(), 0);
        std::fill(seen.begin(), seen.end(), 0);
        for (std::uint32_t r : ps_.missing[fu]) {
          const int s = row_slot[r];
          if (s < 0) continue;
          gm[s] += g[r];
          hm[s] += h[r];
          has_missing[s] = 1;
        }
        const auto& rows = ps_.sorted[fu];
        const auto& vals = ps_.values[fu];
        for (std::size_t q = 0; q < rows.size(); ++q) {
          const std::uint32_t r = rows[q];
          const int s = row_slot[r];
          if (s < 0 || !allowed[static_cast<std::size_t>(s) * nf + fu]) continue;
          const double v = vals[q];
          if (seen[s] && v > last[s]) {
            double thr = last[s] + (v - last[s]) / 2.0;
            if (!(thr > last[s])) thr = v;
            const int node = active[s];
            consider(best[s], f, thr, gl[s], hl[s], gm[s], hm[s], has_missing[s], node_g[node],
                     node_h[node]);
          }
          gl[s] += g[r];
          hl[s] += h[r];
          last[s] = v;
          seen[s] = 1;
        }
      }

      std::vector<int> next;
      for (std::size_t s = 0; s < na; ++s) {
        const int node = active[s];
        if (best[s].feature < 0 || !(0.5 * (best[s].gain - parent_score[s]) > kMinGain)) {
          continue;
        }
        const int left = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        auto& nd = tree.nodes[node];
        nd.feature = best[s].feature;
        nd.threshold = best[s].threshold;
        nd.default_left = best[s].default_left;
        nd.left = left;
        nd.right = left + 1;
        node_g.resize(tree.nodes.size(), 0.0);
        node_h.resize(tree.nodes.size(), 0.0);
        next.push_back(left);
        next.push_back(left + 1);
      }
      if (next.empty()) break;
      for (std::size_t r = 0; r < n; ++r) {
        if (pos[r] < 0) continue;
        const auto& nd = tree.nodes[pos[r]];
        if (nd.is_leaf()) continue;
        const double v = x_(r, static_cast<std::size_t>(nd.feature));
        const bool go_left = std::isnan(v) ? nd.default_left : v < nd.threshold;
        pos[r] = go_left ? nd.left : nd.right;
        node_g[pos[r]] += g[r];
        node_h[pos[r]] += h[r];
      }
      active = std::move(next);
    }

    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
      auto& nd = tree.nodes[k];
      if (!nd.is_leaf()) continue;
      const double denom = node_h[k] + p_.reg_lambda;
      const double w = denom > 0.0 ? -soft_threshold(node_g[k], p_.reg_alpha) / denom : 0.0;
      nd.value = w * p_.learning_rate;
    }
    return tree;
  }

 private:
  double score(double g, double h) const {
    const double t = std::max(std::fabs(g) - p_.reg_alpha, 0.0);
    const double denom = h + p_.reg_lambda;
    return denom > 0.0 ? t * t / denom : 0.0;
  }

  [[gnu::always_inline]] void try_split(SplitCandidate& best, int f, double thr, bool default_left, double gl, double hl,
                 double g, double h) const {
    const double gr = g - gl;
    const double hr = h - hl;
    if (hl < p_.min_child_weight || hr < p_.min_child_weight) return;
    const double gain = score(gl, hl) + score(gr, hr);
    if (gain > best.gain) {
      best.gain = gain;
      best.feature = f;
      best.threshold = thr;
      best.default_left = default_left;
    }
  }

  [[gnu::always_inline]] void consider(SplitCandidate& best, int f, double thr, double gl, double hl, double gm,
                double hm, bool has_missing, double g, double h) const {
    if (has_missing) {
      try_split(best, f, thr, false, gl, hl, g, h);
      try_split(best, f, thr, true, gl + gm, hl + hm, g, h);
    } else {
      // No training rows to learn from: unseen missing values follow the
      // heavier child.
      try_split(best, f, thr, hl >= h - hl, gl, hl, g, h);
    }
  }

  const DenseMatrix& x_;
  const Presorted& ps_;
  const GbtHyperparams& p_;
};

void check_features(const DenseMatrix& x) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (std::isinf(x(r, c))) {
        throw Error(ErrorCode::kNonFiniteFeature, "row " + std::to_string(r) + ", column " +
                                                      std::to_string(c) + " is infinite");
      }
    }
  }
}

// Shared boosting loop. `objective` fills gradients/hessians (n x groups,
// row-major) from margins and returns nothing; `loss` evaluates margins.
template <typename GradFn, typename LossFn>
GbtModel boost(GbtModel model, const DenseMatrix& x, std::uint64_t seed, GradFn gradients,
               LossFn loss) {
  const auto& p = model.params;
  const std::size_t n = x.rows();
  const auto groups = static_cast<std::size_t>(model.num_groups);
  const Presorted ps(x);
  TreeGrower grower(x, ps, p);
  std::mt19937_64 rng(seed);
  std::vector<int> all_features(x.cols());
  std::iota(all_features.begin(), all_features.end(), 0);

  std::vector<double> margin(n * groups, model.base_score);
  std::vector<std::vector<double>> tree_pred;  // per tree, training rows (dart)
  const bool dart = p.booster == Booster::kDart;
  std::vector<double> grad, hess, gk(n), hk(n);
  std::bernoulli_distribution keep_row(p.subsample);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int round = 0; round < p.num_boost_round; ++round) {
    std::vector<std::size_t> dropped;
    std::vector<double> work = margin;
    if (dart) {
      for (std::size_t t = 0; t < model.trees.size(); ++t) {
        if (unit(rng) < p.rate_drop) dropped.push_back(t);
      }
      for (std::size_t t : dropped) {
        const auto& tr = model.trees[t];
        for (std::size_t r = 0; r < n; ++r) {
          work[r * groups + static_cast<std::size_t>(tr.group)] -= tr.weight * tree_pred[t][r];
        }
      }
    }
    gradients(work, grad, hess);

    const std::size_t first_new = model.trees.size();
    for (std::size_t k = 0; k < groups; ++k) {
      std::vector<char> row_used(n, 1);
      if (p.subsample < 1.0) {
        for (std::size_t r = 0; r < n; ++r) row_used[r] = keep_row(rng) ? 1 : 0;
      }
      const auto tree_features = sample_columns(all_features, p.colsample_bytree, rng);
      for (std::size_t r = 0; r < n; ++r) {
        gk[r] = grad[r * groups + k];
        hk[r] = hess[r * groups + k];
      }
      RegressionTree tree = grower.grow(gk, hk, row_used, tree_features, rng);
      tree.group = static_cast<int>(k);
      std::vector<double> pred(n);
      for (std::size_t r = 0; r < n; ++r) pred[r] = tree.predict(x.row(r));
      model.trees.push_back(std::move(tree));
      tree_pred.push_back(std::move(pred));
    }

    double new_weight = 1.0;
    if (dart && !dropped.empty()) {
      const double kd = static_cast<double>(dropped.size());
      new_weight = 1.0 / (kd + p.learning_rate);
      const double factor = kd / (kd + p.learning_rate);
      for (std::size_t t : dropped) {
        auto& tr = model.trees[t];
        const double delta = tr.weight * factor - tr.weight;
        for (std::size_t r = 0; r < n; ++r) {
          margin[r * groups + static_cast<std::size_t>(tr.group)] += delta * tree_pred[t][r];
        }
        tr.weight *= factor;
      }
    }
    for (std::size_t t = first_new; t < model.trees.size(); ++t) {
      auto& tr = model.trees[t];
      tr.weight = new_weight;
      for (std::size_t r = 0; r < n; ++r) {
        margin[r * groups + static_cast<std::size_t>(tr.group)] += new_weight * tree_pred[t][r];
      }
    }
    if (!dart) tree_pred.clear();
    if (!dart) tree_pred.resize(model.trees.size());
    model.training_loss.push_back(loss(margin));
  }
  return model;
}

}  // namespace

GbtModel fit_softmax(const DenseMatrix& x, std::span<const int> labels, int num_classes,
                     const GbtHyperparams& params, std::uint64_t seed) {
  validate(params);
  if (labels.size() != x.rows()) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(labels.size()) + " labels for " +
                                                std::to_string(x.rows()) + " rows");
  }
  if (x.rows() < 2) throw Error(ErrorCode::kDegenerateTargets, "need at least 2 samples");
  if (num_classes < 2) throw Error(ErrorCode::kDegenerateTargets, "need at least 2 classes");
  std::set<int> distinct;
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw Error(ErrorCode::kInvariantViolation,
                  "label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    distinct.insert(y);
  }
  if (distinct.size() < 2) {
    throw Error(ErrorCode::kDegenerateTargets, "training labels contain a single class");
  }
  check_features(x);

  GbtModel model;
  model.objective = Objective::kSoftmax;
  model.num_groups = num_classes;
  model.num_features = static_cast<int>(x.cols());
  model.params = params;
  return boost(
      std::move(model), x, seed,
      [&](const std::vector<double>& m, std::vector<double>& g, std::vector<double>& h) {
        softmax_gradients(labels, m, num_classes, g, h);
      },
      [&](const std::vector<double>& m) { return softmax_loss(labels, m, num_classes); });
}

GbtModel fit_cox(const DenseMatrix& x, std::span<const SurvivalRecord> survival,
                 const GbtHyperparams& params, std::uint64_t seed) {
  validate(params);
  if (survival.size() != x.rows()) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(survival.size()) +
                                                " survival records for " +
                                                std::to_string(x.rows()) + " rows");
  }
  if (x.rows() < 2) throw Error(ErrorCode::kDegenerateTargets, "need at least 2 samples");
  bool any_event = false;
  for (const auto& s : survival) {
    validate(s);
    any_event = any_event || s.event;
  }
  if (!any_event) throw Error(ErrorCode::kDegenerateTargets, "no events among training records");
  check_features(x);

  GbtModel model;
  model.objective = Objective::kCox;
  model.num_groups = 1;
  model.num_features = static_cast<int>(x.cols());
  model.params = params;
  return boost(
      std::move(model), x, seed,
      [&](const std::vector<double>& m, std::vector<double>& g, std::vector<double>& h) {
        cox_gradients(survival, m, g, h);
      },
      [&](const std::vector<double>& m) { return cox_loss(survival, m); });
}

DenseMatrix predict_margin(const GbtModel& model, const DenseMatrix& x) {
  if (static_cast<int>(x.cols()) != model.num_features) {
    throw Error(ErrorCode::kWidthMismatch, "model expects " + std::to_string(model.num_features) +
                                               " features, got " + std::to_string(x.cols()));
  }
  DenseMatrix out(x.rows(), static_cast<std::size_t>(model.num_groups), model.base_score);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    for (const auto& t : model.trees) {
      out(r, static_cast<std::size_t>(t.group)) += t.weight * t.predict(row);
    }
  }
  return out;
}

DenseMatrix predict_proba(const GbtModel& model, const DenseMatrix& x) {
  if (model.objective != Objective::kSoftmax) {
    throw Error(ErrorCode::kConfigError, "probabilities need a softmax model");
  }
  DenseMatrix m = predict_margin(model, x);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) z += (v = std::exp(v - mx));
    for (double& v : row) v /= z;
  }
  return m;
}

std::vector<double> predict_risk(const GbtModel& model, const DenseMatrix& x) {
  if (model.objective != Objective::kCox) {
    throw Error(ErrorCode::kConfigError, "risk scores need a cox model");
  }
  const DenseMatrix m = predict_margin(model, x);
  return {m.data().begin(), m.data().end()};
}

nlohmann::ordered_json to_json(const GbtModel& model) {
  nlohmann::ordered_json j;
  j["objective"] = model.objective == Objective::kCox ? "cox" : "softmax";
  j["num_groups"] = model.num_groups;
  j["num_features"] = model.num_features;
  j["base_score"] = model.base_score;
  j["params"] = to_json(model.params);
  auto trees = nlohmann::ordered_json::array();
  for (const auto& t : model.trees) {
    nlohmann::ordered_json jt;
    jt["group"] = t.group;
    jt["weight"] = t.weight;
    auto nodes = nlohmann::ordered_json::array();
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) {
        nodes.push_back({{"leaf", n.value}});
      } else {
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"default_left", n.default_left},
                         {"left", n.left},
                         {"right", n.right}});
      }
    }
    jt["nodes"] = std::move(nodes);
    trees.push_back(std::move(jt));
  }
  j["trees"] = std::move(trees);
  return j;
}

}  // namespace conic

#include "flowkit/evalstats.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace flowkit {

namespace {

double stable_log_sigmoid(double d) {
  // log(1/(1+exp(-d))) without overflow.
  if (d >= 0.0) return -std::log1p(std::exp(-d));
  return d - std::log1p(std::exp(d));
}

double sigmoid(double d) {
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

/// One aggregated pairwise observation: wins_a and wins_b successes on a
/// latent difference d = x . theta over the free parameters.
struct BtObservation {
  std::vector<std::pair<Index, double>> x;  // sparse design row
  double wins_a = 0.0;
  double wins_b = 0.0;
};

double observation_dot(const BtObservation& obs, const Eigen::VectorXd& theta) {
  double d = 0.0;
  for (const auto& [idx, coef] : obs.x) d += coef * theta[idx];
  return d;
}

double bt_log_likelihood(const std::vector<BtObservation>& observations, const Eigen::VectorXd& theta) {
  double ll = 0.0;
  for (const auto& obs : observations) {
    const double d = observation_dot(obs, theta);
    ll += obs.wins_a * stable_log_sigmoid(d) + obs.wins_b * stable_log_sigmoid(-d);
  }
  return ll;
}

struct BtFitOutcome {
  Eigen::VectorXd theta;
  std::vector<double> ll_trace;
  double grad_norm = 0.0;
  Index iterations = 0;
  bool converged = false;
};

/// Damped Newton ascent on the Bradley-Terry log-likelihood. The trace is
/// non-decreasing; on one-sided data the likelihood has no interior maximum
/// and the loop runs to max_iterations with a finite, correctly ordered theta.
BtFitOutcome fit_bt(const std::vector<BtObservation>& observations, Index n_params, double tolerance,
                    Index max_iterations) {
  BtFitOutcome res;
  res.theta = Eigen::VectorXd::Zero(n_params);
  if (n_params == 0) {
    res.converged = true;
    res.ll_trace.push_back(bt_log_likelihood(observations, res.theta));
    return res;
  }

  // Rank check on the Fisher information at theta = 0.
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(n_params, n_params);
  for (const auto& obs : observations) {
    for (const auto& [i, ci] : obs.x) {
      for (const auto& [j, cj] : obs.x) info(i, j) += (obs.wins_a + obs.wins_b) * ci * cj;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(info);
  qr.setThreshold(1e-10);
  if (qr.rank() < n_params) {
    throw std::invalid_argument("bt_fit: design matrix rank-deficient after anchoring (rank " +
                                std::to_string(qr.rank()) + " of " + std::to_string(n_params) + ")");
  }

  auto gradient_at = [&](const Eigen::VectorXd& theta) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n_params);
    for (const auto& obs : observations) {
      const double d = observation_dot(obs, theta);
      const double p = sigmoid(d);
      const double resid = obs.wins_a - (obs.wins_a + obs.wins_b) * p;
      for (const auto& [i, ci] : obs.x) grad[i] += resid * ci;
    }
    return grad;
  };

  double ll = bt_log_likelihood(observations, res.theta);
  res.ll_trace.push_back(ll);
  Eigen::VectorXd grad = gradient_at(res.theta);
  for (Index iter = 0; iter < max_iterations; ++iter) {
    res.grad_norm = grad.lpNorm<Eigen::Infinity>();
    res.iterations = iter;
    if (res.grad_norm <= tolerance) {
      res.converged = true;
      return res;
    }
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n_params, n_params);
    for (const auto& obs : observations) {
      const double d = observation_dot(obs, res.theta);
      const double p = sigmoid(d);
      const double curv = (obs.wins_a + obs.wins_b) * p * (1.0 - p);
      for (const auto& [i, ci] : obs.x) {
        for (const auto& [j, cj] : obs.x) hess(i, j) += curv * ci * cj;
      }
    }
    hess.diagonal().array() += 1e-12 + 1e-9 * hess.diagonal().maxCoeff();
    Eigen::VectorXd direction = hess.ldlt().solve(grad);
    // Trust region: one-sided records have no interior maximum and would
    // otherwise blow the Newton step up once the curvature vanishes.
    const double dir_norm = direction.lpNorm<Eigen::Infinity>();
    if (dir_norm > 5.0) direction *= 5.0 / dir_norm;

    // Backtracking on the log-likelihood; near the optimum LL differences sink
    // below double resolution, so flat steps are judged by gradient reduction.
    const double ll_noise = 32.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(ll));
    double step = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60 && !accepted; ++halving) {
      const Eigen::VectorXd candidate = res.theta + step * direction;
      const double candidate_ll = bt_log_likelihood(observations, candidate);
      if (candidate_ll > ll + ll_noise) {
        res.theta = candidate;
        ll = candidate_ll;
        grad = gradient_at(res.theta);
        res.ll_trace.push_back(ll);
        accepted = true;
      } else if (candidate_ll >= ll - ll_noise) {
        const Eigen::VectorXd candidate_grad = gradient_at(candidate);
        if (candidate_grad.lpNorm<Eigen::Infinity>() < res.grad_norm) {
          res.theta = candidate;
          ll = std::max(ll, candidate_ll);
          grad = candidate_grad;
          res.ll_trace.push_back(ll);
          accepted = true;
        } else {
          step *= 0.5;
        }
      } else {
        step *= 0.5;
      }
    }
    if (!accepted) {
      res.converged = res.grad_norm <= tolerance;
      return res;
    }
  }
  res.iterations = max_iterations;
  res.grad_norm = grad.lpNorm<Eigen::Infinity>();
  res.converged = res.grad_norm <= tolerance;
  return res;
}

double percentile_linear(const std::vector<double>& sorted_values, double p) {
  const size_t n = sorted_values.size();
  if (n == 0) throw std::invalid_argument("percentile of empty set");
  if (n == 1) return sorted_values[0];
  const double rank = p * static_cast<double>(n - 1);
  const size_t lo = static_cast<size_t>(std::floor(rank));
  const size_t hi = std::min(lo + 1, n - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

void check_vote(int v) {
  if (v != -1 && v != 0 && v != 1) {
    throw std::invalid_argument("vote values must be -1, 0, or +1 (got " + std::to_string(v) + ")");
  }
}

}  // namespace

double consensus(const ItemVotes& v) {
  if (v.votes.empty()) throw std::invalid_argument("consensus: item has no votes");
  double sum = 0.0;
  for (int vote : v.votes) {
    check_vote(vote);
    sum += vote;
  }
  return sum / static_cast<double>(v.votes.size());
}

int majority_vote(const std::vector<int>& votes) {
  if (votes.empty()) throw std::invalid_argument("majority_vote: no votes");
  int counts[3] = {0, 0, 0};  // -1, 0, +1
  for (int v : votes) {
    check_vote(v);
    counts[v + 1] += 1;
  }
  int best_label = -1;
  int best_count = counts[0];
  bool tie = false;
  for (int label = 0; label <= 1; ++label) {
    const int c = counts[label + 1];
    if (c > best_count) {
      best_count = c;
      best_label = label;
      tie = false;
    } else if (c == best_count) {
      tie = true;
    }
  }
  return tie ? 0 : best_label;
}

double likert_to_percent(int score) {
  if (score < 1 || score > 5) throw std::invalid_argument("likert_to_percent: score must be in 1..5");
  return 20.0 * score;
}

double net_win_rate(const std::vector<double>& consensus_scores) {
  if (consensus_scores.empty()) throw std::invalid_argument("net_win_rate: no consensus scores");
  const double mean =
      std::accumulate(consensus_scores.begin(), consensus_scores.end(), 0.0) / static_cast<double>(consensus_scores.size());
  return 100.0 * mean;
}

std::pair<double, double> bootstrap_ci(const std::vector<double>& consensus_scores, Index resamples, Rng& rng) {
  const size_t n = consensus_scores.size();
  if (n < 2) throw std::invalid_argument("bootstrap_ci: need at least two items");
  if (resamples < 1) throw std::invalid_argument("bootstrap_ci: resamples must be >= 1");
  std::vector<double> stats(static_cast<size_t>(resamples));
  for (Index r = 0; r < resamples; ++r) {
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) sum += consensus_scores[rng.uniform_index(n)];
    stats[static_cast<size_t>(r)] = 100.0 * sum / static_cast<double>(n);
  }
  std::sort(stats.begin(), stats.end());
  return {percentile_linear(stats, 0.025), percentile_linear(stats, 0.975)};
}

Band significance_band(double nwt, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("significance_band: sigma must be positive");
  const double magnitude = std::abs(nwt);
  if (magnitude > 2.0 * sigma) return Band::significant;
  if (magnitude > sigma) return Band::moderate;
  return Band::on_par;
}

const char* band_name(Band band) {
  switch (band) {
    case Band::significant: return "significant";
    case Band::moderate: return "moderate";
    case Band::on_par: return "on_par";
  }
  return "unknown";
}

std::map<std::string, double> elo_fit(const std::vector<BattleRecord>& battles, const EloOptions& options) {
  if (battles.empty()) throw std::invalid_argument("elo_fit: no battle records");

  std::vector<std::string> models;
  std::map<std::string, Index> index;
  auto model_index = [&](const std::string& name) {
    auto it = index.find(name);
    if (it != index.end()) return it->second;
    const Index i = static_cast<Index>(models.size());
    models.push_back(name);
    index.emplace(name, i);
    return i;
  };

  // Aggregate wins (ties as half a win each way).
  std::map<std::pair<Index, Index>, double> wins;
  for (const auto& b : battles) {
    if (b.model_a == b.model_b) throw std::invalid_argument("elo_fit: battle pits a model against itself");
    if (!(b.weight > 0.0)) throw std::invalid_argument("elo_fit: battle weight must be positive");
    const Index a = model_index(b.model_a);
    const Index bb = model_index(b.model_b);
    switch (b.outcome) {
      case Outcome::win_a: wins[{a, bb}] += b.weight; break;
      case Outcome::win_b: wins[{bb, a}] += b.weight; break;
      case Outcome::tie:
        wins[{a, bb}] += 0.5 * b.weight;
        wins[{bb, a}] += 0.5 * b.weight;
        break;
    }
  }

  for (const auto& name : options.expected_models) {
    if (index.find(name) == index.end()) {
      throw std::invalid_argument("elo_fit: model '" + name + "' has zero comparisons");
    }
  }

  // Connectivity check (union-find).
  const Index m = static_cast<Index>(models.size());
  std::vector<Index> parent(static_cast<size_t>(m));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<Index(Index)> find = [&](Index v) { return parent[v] == v ? v : parent[v] = find(parent[v]); };
  for (const auto& [pair, w] : wins) parent[find(pair.first)] = find(pair.second);
  std::map<Index, std::vector<std::string>> components;
  for (Index i = 0; i < m; ++i) components[find(i)].push_back(models[static_cast<size_t>(i)]);
  if (components.size() > 1) {
    std::ostringstream os;
    os << "elo_fit: battle graph is disconnected:";
    for (const auto& [root, names] : components) {
      os << " {";
      for (size_t i = 0; i < names.size(); ++i) os << (i ? "," : "") << names[i];
      os << "}";
    }
    throw std::invalid_argument(os.str());
  }

  // Free parameters: log-strengths of models 1..m-1 (model 0 anchored at 0).
  std::vector<BtObservation> observations;
  observations.reserve(wins.size());
  for (const auto& [pair, w] : wins) {
    const auto [a, b] = pair;
    BtObservation obs;
    if (a > 0) obs.x.emplace_back(a - 1, 1.0);
    if (b > 0) obs.x.emplace_back(b - 1, -1.0);
    obs.wins_a = w;
    observations.push_back(std::move(obs));
  }
  const BtFitOutcome fit = fit_bt(observations, m - 1, options.tolerance, options.max_iterations);

  Eigen::VectorXd theta(m);
  theta[0] = 0.0;
  for (Index i = 1; i < m; ++i) theta[i] = fit.theta[i - 1];
  theta.array() -= theta.mean();  // anchor: mean rating exactly 1000

  std::map<std::string, double> ratings;
  const double scale = 400.0 / std::log(10.0);
  for (Index i = 0; i < m; ++i) ratings[models[static_cast<size_t>(i)]] = 1000.0 + scale * theta[i];
  return ratings;
}

std::map<std::string, double> elo_fit_sequential(const std::vector<BattleRecord>& battles, double k_factor,
                                                 double initial_rating) {
  if (battles.empty()) throw std::invalid_argument("elo_fit_sequential: no battle records");
  std::map<std::string, double> ratings;
  for (const auto& b : battles) {
    if (b.model_a == b.model_b) throw std::invalid_argument("elo_fit_sequential: battle pits a model against itself");
    ratings.try_emplace(b.model_a, initial_rating);
    ratings.try_emplace(b.model_b, initial_rating);
    const double ra = ratings[b.model_a];
    const double rb = ratings[b.model_b];
    const double expected_a = 1.0 / (1.0 + std::pow(10.0, (rb - ra) / 400.0));
    double score_a = 0.5;
    if (b.outcome == Outcome::win_a) score_a = 1.0;
    if (b.outcome == Outcome::win_b) score_a = 0.0;
    ratings[b.model_a] = ra + k_factor * b.weight * (score_a - expected_a);
    ratings[b.model_b] = rb + k_factor * b.weight * ((1.0 - score_a) - (1.0 - expected_a));
  }
  return ratings;
}

BTModel bt_fit(const std::vector<BtItem>& items, const BtOptions& options) {
  if (items.empty()) throw std::invalid_argument("bt_fit: no items");

  std::vector<std::string> models;
  std::map<std::string, Index> model_index;
  auto intern_model = [&](const std::string& name) {
    auto it = model_index.find(name);
    if (it != model_index.end()) return it->second;
    const Index i = static_cast<Index>(models.size());
    models.push_back(name);
    model_index.emplace(name, i);
    return i;
  };

  // Coefficient layout: beta0 for models 1..M-1 first, then (group, bin)
  // coefficients. The smallest observed bin of each group is the anchor and
  // carries no parameter.
  std::map<std::string, std::set<int>> group_bins;
  for (const auto& item : items) {
    if (item.model_a == item.model_b) throw std::invalid_argument("bt_fit: item pits a model against itself");
    if (item.votes.empty()) throw std::invalid_argument("bt_fit: item '" + item.item_id + "' has no votes");
    intern_model(item.model_a);
    intern_model(item.model_b);
    for (int bin : {item.bin_a, item.bin_b}) {
      if (bin >= 0) group_bins[item.group].insert(bin);
    }
  }
  const Index m = static_cast<Index>(models.size());
  if (m < 2) throw std::invalid_argument("bt_fit: need at least two models");
  std::map<std::string, int> group_anchor;
  std::map<std::pair<std::string, int>, Index> bin_param;
  Index next_param = m - 1;
  for (const auto& [group, bins] : group_bins) {
    group_anchor[group] = *bins.begin();
    for (auto it = std::next(bins.begin()); it != bins.end(); ++it) {
      bin_param[{group, *it}] = next_param++;
    }
  }
  const Index n_params = next_param;

  std::vector<BtObservation> observations;
  observations.reserve(items.size());
  for (const auto& item : items) {
    BtObservation obs;
    std::map<Index, double> row;
    const Index a = model_index.at(item.model_a);
    const Index b = model_index.at(item.model_b);
    if (a > 0) row[a - 1] += 1.0;
    if (b > 0) row[b - 1] -= 1.0;
    if (item.bin_a >= 0 && item.bin_a != group_anchor.at(item.group)) {
      row[bin_param.at({item.group, item.bin_a})] += 1.0;
    }
    if (item.bin_b >= 0 && item.bin_b != group_anchor.at(item.group)) {
      row[bin_param.at({item.group, item.bin_b})] -= 1.0;
    }
    for (const auto& [idx, coef] : row) {
      if (coef != 0.0) obs.x.emplace_back(idx, coef);
    }
    for (int vote : item.votes) {
      check_vote(vote);
      if (vote == 1) obs.wins_a += 1.0;
      if (vote == -1) obs.wins_b += 1.0;
      if (vote == 0) {
        obs.wins_a += 0.5;
        obs.wins_b += 0.5;
      }
    }
    observations.push_back(std::move(obs));
  }

  const BtFitOutcome fit = fit_bt(observations, n_params, options.tolerance, options.max_iterations);
  if (!fit.converged) {
    std::ostringstream os;
    os << "bt_fit: no convergence after " << fit.iterations << " iterations; gradient norm " << fit.grad_norm;
    throw std::runtime_error(os.str());
  }

  BTModel model;
  model.models = models;
  model.beta0 = Eigen::VectorXd::Zero(m);
  for (Index i = 1; i < m; ++i) model.beta0[i] = fit.theta[i - 1];
  for (const auto& [ga, anchor_bin] : group_anchor) model.beta[{ga, anchor_bin}] = 0.0;
  for (const auto& [key, idx] : bin_param) model.beta[key] = fit.theta[idx];
  model.log_likelihood_trace = fit.ll_trace;
  model.gradient_norm = fit.grad_norm;
  model.iterations = fit.iterations;
  return model;
}

namespace {

std::vector<std::string> jsonl_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::vector<ItemVotes> read_votes_jsonl(std::istream& in) {
  std::vector<ItemVotes> items;
  for (const std::string& line : jsonl_lines(in)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    ItemVotes item;
    item.item_id = j.value("item_id", "");
    item.model_a = j.value("model_a", "");
    item.model_b = j.value("model_b", "");
    item.votes = j.at("votes").get<std::vector<int>>();
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<BattleRecord> read_battles_jsonl(std::istream& in) {
  std::vector<BattleRecord> battles;
  for (const std::string& line : jsonl_lines(in)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    BattleRecord b;
    b.model_a = j.at("model_a").get<std::string>();
    b.model_b = j.at("model_b").get<std::string>();
    const std::string outcome = j.at("outcome").get<std::string>();
    if (outcome == "win_a") {
      b.outcome = Outcome::win_a;
    } else if (outcome == "win_b") {
      b.outcome = Outcome::win_b;
    } else if (outcome == "tie") {
      b.outcome = Outcome::tie;
    } else {
      throw std::invalid_argument("unknown outcome '" + outcome + "'");
    }
    b.weight = j.value("weight", 1.0);
    battles.push_back(std::move(b));
  }
  return battles;
}

std::vector<BtItem> read_bt_items_jsonl(std::istream& in) {
  std::vector<BtItem> items;
  for (const std::string& line : jsonl_lines(in)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    BtItem item;
    item.item_id = j.value("item_id", "");
    item.model_a = j.at("model_a").get<std::string>();
    item.model_b = j.at("model_b").get<std::string>();
    item.votes = j.at("votes").get<std::vector<int>>();
    item.group = j.value("group", "");
    item.bin_a = j.value("bin_a", -1);
    item.bin_b = j.value("bin_b", -1);
    items.push_back(std::move(item));
  }
  return items;
}

namespace {

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

}  // namespace

std::vector<ItemVotes> read_votes_file(const std::string& path) {
  auto in = open_or_throw(path);
  return read_votes_jsonl(in);
}

std::vector<BattleRecord> read_battles_file(const std::string& path) {
  auto in = open_or_throw(path);
  return read_battles_jsonl(in);
}

std::vector<BtItem> read_bt_items_file(const std::string& path) {
  auto in = open_or_throw(path);
  return read_bt_items_jsonl(in);
}

}  // namespace flowkit

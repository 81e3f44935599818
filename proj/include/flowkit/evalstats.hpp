#pragma once

#include "flowkit/rng.hpp"
#include "flowkit/tensor.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace flowkit {

/// Pairwise preference votes for one item: +1 prefers model A, 0 ties,
/// -1 prefers model B.
struct ItemVotes {
  std::string item_id;
  std::string model_a;
  std::string model_b;
  std::vector<int> votes;
};

enum class Outcome { win_a, tie, win_b };

struct BattleRecord {
  std::string model_a;
  std::string model_b;
  Outcome outcome = Outcome::tie;
  double weight = 1.0;
};

/// Mean of the per-rater preferences; the item's consensus score in [-1, 1].
double consensus(const ItemVotes& v);

/// Majority label over A/B votes; any tie collapses to 0.
int majority_vote(const std::vector<int>& votes);

/// 1..5 Likert score mapped onto the linear 20%-step scale (20, 40, ..., 100).
double likert_to_percent(int score);

/// 100 x mean consensus score, in [-100, 100].
double net_win_rate(const std::vector<double>& consensus_scores);

/// Percentile bootstrap interval (2.5 / 97.5, linear interpolation between
/// order statistics) of the net win rate over `resamples` resamples of the
/// item-level consensus scores. Deterministic given the rng state.
std::pair<double, double> bootstrap_ci(const std::vector<double>& consensus_scores, Index resamples, Rng& rng);

enum class Band { significant, moderate, on_par };

/// |nwt| beyond 2 sigma is significant, within 1-2 sigma moderate, else on par.
Band significance_band(double nwt, double sigma);
const char* band_name(Band band);

struct EloOptions {
  double tolerance = 1e-10;    // max-norm of the log-likelihood gradient
  Index max_iterations = 500;  // degenerate records (one-sided sweeps) stop here
  /// Models that must appear in the battles; missing ones raise an error.
  std::vector<std::string> expected_models;
};

/// Bradley-Terry maximum-likelihood strengths (ties count as half a win for
/// each side) mapped onto the Elo scale: rating = (400/ln 10) * log-strength,
/// anchored so the mean rating is 1000. Throws when the battle graph is
/// disconnected (the components are named) or a listed model never battles.
std::map<std::string, double> elo_fit(const std::vector<BattleRecord>& battles, const EloOptions& options = {});

/// Classic sequential K-factor Elo over the battle list, for comparison with
/// the order-independent fit.
std::map<std::string, double> elo_fit_sequential(const std::vector<BattleRecord>& battles, double k_factor = 32.0,
                                                 double initial_rating = 1000.0);

/// One evaluated item with optional binned covariates: bin_a / bin_b give the
/// objective-metric bin of each model's generation (negative = no covariate)
/// and `group` selects the per-group coefficient table.
struct BtItem {
  std::string item_id;
  std::string model_a;
  std::string model_b;
  std::vector<int> votes;
  std::string group;
  int bin_a = -1;
  int bin_b = -1;
};

/// Latent quality z_mi = beta0_m + beta_{bin(m,i), group(i)}; preference odds
/// follow a Bradley-Terry likelihood on z differences.
struct BTModel {
  std::vector<std::string> models;  // models[0] is the anchor (offset 0)
  Eigen::VectorXd beta0;            // per-model offsets
  /// (group, bin) -> coefficient; the smallest observed bin of each group is
  /// the anchor and fixed to 0.
  std::map<std::pair<std::string, int>, double> beta;
  std::vector<double> log_likelihood_trace;
  double gradient_norm = 0.0;
  Index iterations = 0;
};

struct BtOptions {
  double tolerance = 1e-8;
  Index max_iterations = 200;
};

/// Maximum-likelihood fit of the binned-covariate Bradley-Terry model via
/// damped Newton ascent; the log-likelihood trace is non-decreasing. Throws
/// on a rank-deficient design or when the gradient norm has not reached the
/// tolerance within max_iterations (the message carries the final norm).
BTModel bt_fit(const std::vector<BtItem>& items, const BtOptions& options = {});

std::vector<ItemVotes> read_votes_jsonl(std::istream& in);
std::vector<BattleRecord> read_battles_jsonl(std::istream& in);
std::vector<BtItem> read_bt_items_jsonl(std::istream& in);

std::vector<ItemVotes> read_votes_file(const std::string& path);
std::vector<BattleRecord> read_battles_file(const std::string& path);
std::vector<BtItem> read_bt_items_file(const std::string& path);

}  // namespace flowkit

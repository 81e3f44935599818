// flowkit command-line interface: train/sample a toy flow-matching model,
// token arithmetic, long-form extension demos, and pairwise evaluation
// statistics over JSONL files.
//
// Exit codes: 0 success, 2 usage/config error, 3 numeric failure.

#include "flowkit/evalstats.hpp"
#include "flowkit/extension.hpp"
#include "flowkit/flow.hpp"
#include "flowkit/mlp.hpp"
#include "flowkit/patchify.hpp"
#include "flowkit/schedule.hpp"
#include "flowkit/solver.hpp"
#include "flowkit/tiling.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

using nlohmann::json;
using namespace flowkit;

constexpr std::uint64_t kDefaultSeed = 42;
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct GlobalOptions {
  std::uint64_t seed = kDefaultSeed;
  std::string out_dir = ".";
  std::string format = "json";
  std::string config_path;
};

json schedule_to_json(const TimeSchedule& sched) {
  json j = json::array();
  for (double t : sched.knots) j.push_back(t);
  return j;
}

TimeSchedule parse_schedule(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("schedule must be linear:N or linquad:S,N");
  const std::string kind = text.substr(0, colon);
  const std::string args = text.substr(colon + 1);
  if (kind == "linear") {
    return linear_schedule(std::stol(args));
  }
  if (kind == "linquad") {
    const auto comma = args.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("linquad schedule needs S,N");
    return linear_quadratic_schedule(std::stol(args.substr(0, comma)), std::stol(args.substr(comma + 1)));
  }
  throw std::invalid_argument("unknown schedule kind '" + kind + "'");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

/// Keys in --config mirror the long flag names; explicit flags win. The
/// config is folded into the argument list before parsing.
std::vector<std::string> merge_config_args(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
  }
  if (config_path.empty()) return args;

  std::ifstream in(config_path);
  if (!in) throw std::invalid_argument("cannot open config " + config_path);
  json j;
  in >> j;
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    if (std::find(args.begin(), args.end(), flag) != args.end()) continue;  // flags win
    args.push_back(flag);
    args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
  }
  return args;
}

json resolved_config(const GlobalOptions& global) {
  return json{{"seed", global.seed}, {"out_dir", global.out_dir}, {"format", global.format}};
}

std::string loss_trace_csv(const std::vector<std::pair<Index, double>>& trace) {
  std::ostringstream os;
  os << "step,loss\n";
  for (const auto& [step, loss] : trace) os << step << "," << format_double(loss) << "\n";
  return os.str();
}

std::string loss_trace_svg(const std::vector<std::pair<Index, double>>& trace) {
  // Minimal line chart, pure text emission.
  const double width = 640.0, height = 360.0, pad = 40.0;
  double max_loss = 1e-12, max_step = 1.0;
  for (const auto& [step, loss] : trace) {
    max_loss = std::max(max_loss, loss);
    max_step = std::max(max_step, static_cast<double>(step));
  }
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "  <polyline fill=\"none\" stroke=\"black\" points=\"";
  for (const auto& [step, loss] : trace) {
    const double x = pad + (width - 2 * pad) * static_cast<double>(step) / max_step;
    const double y = height - pad - (height - 2 * pad) * loss / max_loss;
    os << x << "," << y << " ";
  }
  os << "\"/>\n</svg>\n";
  return os.str();
}

int cmd_train(const GlobalOptions& global, Index steps, Index batch, double lr, const std::string& out_path,
              const std::string& svg_path) {
  TrainConfig config;
  config.steps = steps;
  config.batch = batch;
  config.learning_rate = lr;
  config.seed = global.seed;
  const std::vector<Tensor> dataset = two_gaussian_dataset(4096, global.seed);

  TrainResult result;
  try {
    result = train_flow(dataset, config);
  } catch (const TrainingDiverged& e) {
    std::cerr << e.what() << "\n";
    return kExitNumeric;
  }

  std::filesystem::create_directories(global.out_dir);
  const std::string ckpt = out_path.empty() ? global.out_dir + "/model.json" : out_path;
  save_checkpoint(result.model, ckpt);
  write_text(global.out_dir + "/loss_trace.csv", loss_trace_csv(result.loss_trace));
  if (!svg_path.empty()) write_text(svg_path, loss_trace_svg(result.loss_trace));

  json report;
  report["config"] = resolved_config(global);
  report["config"]["steps"] = steps;
  report["config"]["batch"] = batch;
  report["config"]["lr"] = lr;
  report["checkpoint"] = ckpt;
  report["final_loss"] = result.loss_trace.back().second;
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

int cmd_sample(const GlobalOptions& global, const std::string& ckpt, Index n, const std::string& schedule_text,
               double guidance_scale, bool use_midpoint, bool has_guidance) {
  MlpVelocityField model;
  try {
    model = load_checkpoint(ckpt);
  } catch (const std::exception& e) {
    std::cerr << "bad checkpoint: " << e.what() << "\n";
    return kExitConfig;
  }
  const TimeSchedule sched = parse_schedule(schedule_text);
  std::optional<GuidanceConfig> guidance;
  if (has_guidance) guidance = GuidanceConfig{guidance_scale};

  Rng rng(global.seed, 100);
  const Eigen::MatrixXd samples = sample_model(model, n, sched, guidance, rng, use_midpoint);

  json report;
  report["config"] = resolved_config(global);
  report["config"]["schedule"] = schedule_text;
  report["config"]["n"] = n;
  report["schedule"] = schedule_to_json(sched);
  json pts = json::array();
  for (Index i = 0; i < samples.rows(); ++i) {
    pts.push_back(json::array({samples(i, 0), samples(i, 1)}));
  }
  report["samples"] = std::move(pts);
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

int cmd_tokens(const GlobalOptions& global, Index frames, Index height, Index width, Index tae_factor,
               const std::string& patch_text) {
  long kt = 1, kh = 2, kw = 2;
  if (std::sscanf(patch_text.c_str(), "%ld,%ld,%ld", &kt, &kh, &kw) != 3) {
    throw std::invalid_argument("--patch expects kt,kh,kw");
  }
  const Index t_latent = latent_frame_count(frames, tae_factor);
  if (height % tae_factor != 0 || width % tae_factor != 0) {
    throw std::invalid_argument("height and width must be divisible by the TAE factor");
  }
  const Index tokens = token_count(t_latent, height / tae_factor, width / tae_factor,
                                   PatchSpec{static_cast<Index>(kt), static_cast<Index>(kh), static_cast<Index>(kw)});

  json report;
  report["config"] = resolved_config(global);
  report["latent"] = {t_latent, height / tae_factor, width / tae_factor};
  report["tokens"] = tokens;
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

int cmd_extend(const GlobalOptions& global, const std::string& mode, Index n, Index hop, Index ctx,
               const std::string& window_text, const std::string& schedule_text, Index channels, Index candidates,
               Index beam) {
  const SegmentPlan plan = plan_segments(n, hop, ctx);
  const TimeSchedule sched = parse_schedule(schedule_text);
  const WindowKind window = window_text == "uniform" ? WindowKind::uniform : WindowKind::bartlett;
  Rng rng(global.seed, 200);

  // Built-in demo field: velocity -x decays every trajectory toward zero.
  const VelocityFn field = [](const Tensor& x, double, const Tensor*) {
    Tensor u = x;
    u.array() = -x.array();
    return u;
  };

  Tensor sequence;
  if (mode == "md") {
    // Same stream as segment 0 of the autoregressive modes, so a single
    // segment produces identical output across modes.
    Rng noise = rng.split(0).split(0);
    const Tensor x_init = sample_standard_normal(noise, Shape{n, channels});
    const std::vector<VelocityFn> fields(plan.spans.size(), field);
    sequence = multidiffusion_solve(fields, plan, sched, window, x_init);
  } else if (mode == "ar") {
    sequence = ar_generate(field, plan, sched, ArMode::both, rng, channels);
  } else {
    const SequenceScorer scorer = [](const Tensor& x) { return -x.array().square().sum(); };
    sequence = beam_extend(field, plan, sched, scorer, candidates, beam, rng, ArMode::both, channels);
  }

  const std::vector<SoftMask> masks = normalized_masks(plan, window);
  json mask_report = json::array();
  for (Index f = 0; f < n; ++f) {
    json row;
    row["frame"] = f;
    json weights = json::array();
    double sum = 0.0;
    for (size_t j = 0; j < plan.spans.size(); ++j) {
      const auto [s, e] = plan.spans[j];
      const double w = (f >= s && f < e) ? masks[j].weights[f - s] : 0.0;
      weights.push_back(w);
      sum += w;
    }
    row["weights"] = std::move(weights);
    row["sum"] = sum;
    mask_report.push_back(std::move(row));
  }

  if (global.format == "csv") {
    std::ostringstream os;
    os << "frame";
    for (size_t j = 0; j < plan.spans.size(); ++j) os << ",segment_" << j;
    os << ",sum\n";
    for (const auto& row : mask_report) {
      os << row["frame"].get<Index>();
      for (const auto& w : row["weights"]) os << "," << format_double(w.get<double>());
      os << "," << format_double(row["sum"].get<double>()) << "\n";
    }
    std::cout << os.str();
    return kExitOk;
  }

  json report;
  report["config"] = resolved_config(global);
  report["config"]["mode"] = mode;
  report["config"]["n"] = n;
  report["config"]["hop"] = hop;
  report["config"]["ctx"] = ctx;
  report["config"]["window"] = window_text;
  report["config"]["schedule"] = schedule_text;
  json spans = json::array();
  for (const auto& [s, e] : plan.spans) spans.push_back(json::array({s, e}));
  report["spans"] = std::move(spans);
  report["mask_report"] = std::move(mask_report);
  json seq = json::array();
  for (Index f = 0; f < n; ++f) {
    json frame = json::array();
    for (Index c = 0; c < channels; ++c) frame.push_back(sequence.at({f, c}));
    seq.push_back(std::move(frame));
  }
  report["sequence"] = std::move(seq);
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

int cmd_eval(const GlobalOptions& global, const std::string& task, const std::string& in_path, double sigma,
             bool has_sigma, Index bootstrap_n, const std::string& elo_method, double k_factor) {
  json report;
  report["config"] = resolved_config(global);
  report["config"]["task"] = task;
  report["config"]["in"] = in_path;

  if (task == "nwt") {
    const auto items = read_votes_file(in_path);
    std::vector<double> scores;
    scores.reserve(items.size());
    for (const auto& item : items) scores.push_back(consensus(item));
    const double nwt = net_win_rate(scores);
    report["n_items"] = items.size();
    report["nwt"] = nwt;
    if (scores.size() >= 2) {
      Rng rng(global.seed, 300);
      const auto [lo, hi] = bootstrap_ci(scores, bootstrap_n, rng);
      report["ci_lo"] = lo;
      report["ci_hi"] = hi;
      report["bootstrap_resamples"] = bootstrap_n;
    }
    if (has_sigma) {
      report["sigma"] = sigma;
      report["band"] = band_name(significance_band(nwt, sigma));
    }
    if (global.format == "csv") {
      std::cout << "nwt,ci_lo,ci_hi,band\n"
                << format_double(nwt) << ","
                << (report.contains("ci_lo") ? format_double(report["ci_lo"].get<double>()) : "") << ","
                << (report.contains("ci_hi") ? format_double(report["ci_hi"].get<double>()) : "") << ","
                << (report.contains("band") ? report["band"].get<std::string>() : "") << "\n";
      return kExitOk;
    }
  } else if (task == "elo") {
    const auto battles = read_battles_file(in_path);
    const auto ratings = elo_method == "sequential" ? elo_fit_sequential(battles, k_factor) : elo_fit(battles);
    report["method"] = elo_method;
    json jr = json::object();
    for (const auto& [name, r] : ratings) jr[name] = r;
    report["ratings"] = std::move(jr);
    if (global.format == "csv") {
      std::cout << "model,rating\n";
      for (const auto& [name, r] : ratings) std::cout << name << "," << format_double(r) << "\n";
      return kExitOk;
    }
  } else {
    const auto items = read_bt_items_file(in_path);
    const BTModel model = bt_fit(items);
    json offsets = json::object();
    for (size_t m = 0; m < model.models.size(); ++m) offsets[model.models[m]] = model.beta0[static_cast<Index>(m)];
    report["beta0"] = std::move(offsets);
    json coefs = json::array();
    for (const auto& [key, value] : model.beta) {
      coefs.push_back(json{{"group", key.first}, {"bin", key.second}, {"beta", value}});
    }
    report["beta"] = std::move(coefs);
    report["iterations"] = model.iterations;
    report["gradient_norm"] = model.gradient_norm;
    if (global.format == "csv") {
      std::cout << "group,bin,beta\n";
      for (const auto& [key, value] : model.beta) {
        std::cout << key.first << "," << key.second << "," << format_double(value) << "\n";
      }
      return kExitOk;
    }
  }

  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flow-matching inference math and pairwise evaluation statistics"};
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("--seed", global.seed, "global rng seed (default 42)");
  app.add_option("--out-dir", global.out_dir, "output directory, created when missing");
  app.add_option("--format", global.format, "report format: json or csv")->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--config", global.config_path, "JSON config whose keys mirror the flags; flags win");

  auto* train = app.add_subcommand("train", "train the toy flow-matching model on the two-Gaussian dataset");
  Index train_steps = 4000, train_batch = 128;
  double train_lr = 1e-3;
  std::string train_out, train_svg;
  train->add_option("--steps", train_steps, "optimizer steps")->check(CLI::PositiveNumber);
  train->add_option("--batch", train_batch, "batch size")->check(CLI::PositiveNumber);
  train->add_option("--lr", train_lr, "learning rate");
  train->add_option("--out", train_out, "checkpoint path (default <out-dir>/model.json)");
  train->add_option("--svg", train_svg, "optional SVG loss chart path");

  auto* sample = app.add_subcommand("sample", "draw samples from a trained checkpoint");
  std::string sample_ckpt, sample_schedule = "linquad:50,250";
  Index sample_n = 100;
  double sample_guidance = 1.0;
  bool sample_midpoint = false;
  sample->add_option("--ckpt", sample_ckpt, "checkpoint path")->required();
  sample->add_option("--n", sample_n, "number of samples")->check(CLI::NonNegativeNumber);
  sample->add_option("--schedule", sample_schedule, "linear:N or linquad:S,N (default linquad:50,250)");
  auto* guidance_opt = sample->add_option("--guidance", sample_guidance, "classifier-free guidance scale");
  sample->add_flag("--midpoint", sample_midpoint, "use the midpoint solver instead of Euler");

  auto* tokens = app.add_subcommand("tokens", "backbone token count for a raw video shape");
  Index tok_frames = 256, tok_height = 768, tok_width = 768, tok_factor = 8;
  std::string tok_patch = "1,2,2";
  tokens->add_option("--frames", tok_frames, "raw frame count")->check(CLI::PositiveNumber);
  tokens->add_option("--height", tok_height, "raw height in px")->check(CLI::PositiveNumber);
  tokens->add_option("--width", tok_width, "raw width in px")->check(CLI::PositiveNumber);
  tokens->add_option("--tae-factor", tok_factor, "spatio-temporal compression factor")->check(CLI::PositiveNumber);
  tokens->add_option("--patch", tok_patch, "patch kernel kt,kh,kw");

  auto* extend = app.add_subcommand("extend", "long-form generation demo over overlapping segments");
  std::string ext_mode = "md", ext_window = "triangle", ext_schedule = "linquad:50,250";
  Index ext_n = 90, ext_hop = 30, ext_ctx = 10, ext_channels = 1, ext_candidates = 4, ext_beam = 2;
  extend->add_option("--mode", ext_mode, "md | ar | beam")->check(CLI::IsMember({"md", "ar", "beam"}));
  extend->add_option("--n", ext_n, "total frames")->check(CLI::PositiveNumber);
  extend->add_option("--hop", ext_hop, "segment hop length")->check(CLI::PositiveNumber);
  extend->add_option("--ctx", ext_ctx, "overlap/context length")->check(CLI::NonNegativeNumber);
  extend->add_option("--window", ext_window, "uniform | triangle")->check(CLI::IsMember({"uniform", "triangle"}));
  extend->add_option("--schedule", ext_schedule, "solver schedule");
  extend->add_option("--channels", ext_channels, "channels per frame")->check(CLI::PositiveNumber);
  extend->add_option("--candidates", ext_candidates, "beam search candidates per prefix")->check(CLI::PositiveNumber);
  extend->add_option("--beam", ext_beam, "beam width")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "pairwise evaluation statistics over JSONL records");
  std::string eval_task, eval_in, eval_method = "mle";
  double eval_sigma = 0.0, eval_k = 32.0;
  Index eval_bootstrap = 1000;
  eval->add_option("task", eval_task, "nwt | elo | bt")->required()->check(CLI::IsMember({"nwt", "elo", "bt"}));
  eval->add_option("--in", eval_in, "input JSONL file")->required();
  auto* sigma_opt = eval->add_option("--sigma", eval_sigma, "net-win standard deviation for the significance band");
  eval->add_option("--bootstrap", eval_bootstrap, "bootstrap resamples (default 1000)")->check(CLI::PositiveNumber);
  eval->add_option("--method", eval_method, "elo method: mle | sequential")->check(CLI::IsMember({"mle", "sequential"}));
  eval->add_option("--k", eval_k, "K factor for sequential elo");

  for (CLI::App* sub : {train, sample, tokens, extend, eval}) sub->fallthrough();

  std::vector<std::string> args;
  try {
    args = merge_config_args(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  std::vector<const char*> argv2;
  argv2.push_back(argc > 0 ? argv[0] : "flowkit");
  for (const std::string& a : args) argv2.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv2.size()), argv2.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" || e.get_name() == "CallForVersion") {
      return app.exit(e);
    }
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (train->parsed()) return cmd_train(global, train_steps, train_batch, train_lr, train_out, train_svg);
    if (sample->parsed()) {
      return cmd_sample(global, sample_ckpt, sample_n, sample_schedule, sample_guidance, sample_midpoint,
                        guidance_opt->count() > 0);
    }
    if (tokens->parsed()) return cmd_tokens(global, tok_frames, tok_height, tok_width, tok_factor, tok_patch);
    if (extend->parsed()) {
      return cmd_extend(global, ext_mode, ext_n, ext_hop, ext_ctx, ext_window, ext_schedule, ext_channels,
                        ext_candidates, ext_beam);
    }
    if (eval->parsed()) {
      return cmd_eval(global, eval_task, eval_in, eval_sigma, sigma_opt->count() > 0, eval_bootstrap, eval_method,
                      eval_k);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitConfig;
}

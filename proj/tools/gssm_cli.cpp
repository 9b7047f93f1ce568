// Command-line front end: synth, reconstruct, extract-features, train, infer,
// evaluate, attribute, curves. A JSON config provides module parameters;
// flags override config keys. Every output directory receives a run manifest
// so results are reproducible from (config, seed, inputs).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gssm/attribution.hpp"
#include "gssm/density_model.hpp"
#include "gssm/ekf.hpp"
#include "gssm/errors.hpp"
#include "gssm/evaluation.hpp"
#include "gssm/event_io.hpp"
#include "gssm/features.hpp"
#include "gssm/gssm_score.hpp"
#include "gssm/mathx.hpp"
#include "gssm/parallel.hpp"
#include "gssm/rng.hpp"
#include "gssm/scorers.hpp"
#include "gssm/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
  uint64_t seed = 131;
  int workers = 0;  // 0 = resolve from GSSM_WORKERS or 1
  json raw;         // full merged config for the manifest

  gssm::GeneratorSpec generator;
  gssm::ModelConfig model;
  gssm::EkfParams ekf;
  gssm::EvalOptions evaluation;
};

Eigen::VectorXd vec_from_json(const json& j, Eigen::Index expected, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != expected) {
    throw gssm::ConfigError(std::string("config: ") + what + " needs " +
                            std::to_string(expected) + " entries");
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), expected);
}

gssm::EkfParams ekf_from_json(const json& j) {
  gssm::EkfParams p;
  if (j.contains("subject_process")) {
    p.subject_process = vec_from_json(j["subject_process"], 6, "ekf.subject_process");
  }
  if (j.contains("object_process")) {
    p.object_process = vec_from_json(j["object_process"], 4, "ekf.object_process");
  }
  if (j.contains("subject_meas")) {
    p.subject_meas = vec_from_json(j["subject_meas"], 3, "ekf.subject_meas");
  }
  if (j.contains("object_meas")) {
    p.object_meas = vec_from_json(j["object_meas"], 3, "ekf.object_meas");
  }
  p.epsilon = j.value("epsilon", p.epsilon);
  p.max_speed = j.value("max_speed", p.max_speed);
  p.max_yaw_rate = j.value("max_yaw_rate", p.max_yaw_rate);
  p.max_accel = j.value("max_accel", p.max_accel);
  return p;
}

gssm::ModelConfig model_from_json(const json& j) {
  gssm::ModelConfig c;
  c.repr_dim = j.value("repr_dim", c.repr_dim);
  c.xc_hidden = j.value("xc_hidden", c.xc_hidden);
  c.xe_hidden = j.value("xe_hidden", c.xe_hidden);
  c.attention_blocks = j.value("attention_blocks", c.attention_blocks);
  c.attention_heads = j.value("attention_heads", c.attention_heads);
  c.ff_mult = j.value("ff_mult", c.ff_mult);
  c.conv_layers = j.value("conv_layers", c.conv_layers);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.random_tokens = j.value("random_tokens", c.random_tokens);
  c.include_accel = j.value("include_accel", c.include_accel);
  c.beta = j.value("beta", c.beta);
  c.dropout = j.value("dropout", c.dropout);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.perturb_range_frac = j.value("perturb_range_frac", c.perturb_range_frac);
  c.js_quad_points = j.value("js_quad_points", c.js_quad_points);
  return c;
}

gssm::EvalOptions eval_from_json(const json& j) {
  gssm::EvalOptions o;
  o.min_alert_seconds = j.value("min_alert_seconds", o.min_alert_seconds);
  o.contiguous_alert = j.value("contiguous_alert", o.contiguous_alert);
  o.abstentions_count_in_total =
      j.value("abstentions_count_in_total", o.abstentions_count_in_total);
  o.threshold_count = j.value("threshold_count", o.threshold_count);
  o.tti_cap = j.value("tti_cap", o.tti_cap);
  if (j.contains("restriction_rates")) {
    o.restriction_rates = j["restriction_rates"].get<std::vector<double>>();
  }
  return o;
}

RunConfig load_config(const std::string& path, std::optional<uint64_t> seed_flag,
                      int workers_flag) {
  RunConfig cfg;
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw gssm::ConfigError("cannot open config " + path);
    in >> j;
  }
  cfg.seed = seed_flag.value_or(j.value("seed", cfg.seed));
  cfg.workers = workers_flag > 0 ? workers_flag : j.value("workers", 0);
  if (j.contains("generator")) cfg.generator = gssm::generator_spec_from_json(j["generator"]);
  if (j.contains("model")) cfg.model = model_from_json(j["model"]);
  if (j.contains("ekf")) cfg.ekf = ekf_from_json(j["ekf"]);
  if (j.contains("evaluation")) cfg.evaluation = eval_from_json(j["evaluation"]);
  if (!j.contains("generator") || !j["generator"].contains("seed")) cfg.generator.seed = cfg.seed;
  if (!j.contains("model") || !j["model"].contains("seed")) cfg.model.seed = cfg.seed;
  cfg.evaluation.workers = cfg.workers;
  cfg.raw = std::move(j);
  cfg.raw["seed"] = cfg.seed;
  return cfg;
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                    const json& extra = json::object()) {
  fs::create_directories(dir);
  json m;
  m["tool"] = "gssm";
  m["version"] = GSSM_VERSION;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["config"] = cfg.raw;
  if (!extra.empty()) m["inputs"] = extra;
  std::ofstream out(dir / "run_manifest.json");
  if (!out) throw gssm::Error("cannot write run manifest under " + dir.string());
  out << m.dump(2) << "\n";
}

std::vector<gssm::Event> load_reconstructed(const fs::path& dir, const RunConfig& cfg) {
  const auto files = gssm::list_event_files(dir);
  return gssm::parallel_map<gssm::Event>(
      files.size(), gssm::resolve_workers(cfg.workers), [&](size_t i) {
        const gssm::Event raw = gssm::reindex_objects(gssm::load_event(files[i]));
        return gssm::reconstruct_event(raw, cfg.ekf);
      });
}

std::pair<std::string, std::string> parse_pair(const std::string& pair) {
  const auto colon = pair.find(':');
  if (colon == std::string::npos) {
    throw gssm::ArgumentError("--pair expects subject_id:object_id");
  }
  return {pair.substr(0, colon), pair.substr(colon + 1)};
}

std::vector<std::unique_ptr<gssm::RiskScorer>> make_scorers(
    const std::string& names, const gssm::DensityModel* model,
    const std::vector<fs::path>& external_csv) {
  std::vector<std::unique_ptr<gssm::RiskScorer>> scorers;
  std::string token;
  std::stringstream ss(names);
  while (std::getline(ss, token, ',')) {
    if (token == "gssm") {
      if (model == nullptr) throw gssm::ArgumentError("gssm scorer requires --model");
      scorers.push_back(std::make_unique<gssm::GssmScorer>(*model));
    } else if (token == "ttc2d") {
      scorers.push_back(std::make_unique<gssm::Ssm2dScorer>(gssm::ssm::Measure::kTtc2d));
    } else if (token == "tadv") {
      scorers.push_back(std::make_unique<gssm::Ssm2dScorer>(gssm::ssm::Measure::kTadv));
    } else if (token == "act") {
      scorers.push_back(std::make_unique<gssm::Ssm2dScorer>(gssm::ssm::Measure::kAct));
    } else if (token == "spacing") {
      scorers.push_back(std::make_unique<gssm::SpacingScorer>());
    } else if (token.rfind("csv:", 0) == 0) {
      scorers.push_back(std::make_unique<gssm::CsvScorer>(token.substr(4), external_csv));
    } else {
      throw gssm::ArgumentError("unknown scorer '" + token + "'");
    }
  }
  if (scorers.empty()) throw gssm::ArgumentError("no scorers selected");
  return scorers;
}

// --- extract-features -------------------------------------------------------

std::vector<double> sample_times_for(const gssm::Event& event, const json& ground_truth,
                                     double stride) {
  if (!ground_truth.empty() && ground_truth.contains("events") &&
      ground_truth["events"].contains(event.event_id)) {
    return ground_truth["events"][event.event_id]["sample_times"].get<std::vector<double>>();
  }
  std::vector<double> times;
  const auto& subj = event.subject();
  for (double t = subj.start_time() + 2.5; t <= subj.end_time() - 2.0 * gssm::kDt + 1e-9;
       t += stride) {
    times.push_back(std::round(t / gssm::kDt) * gssm::kDt);
  }
  return times;
}

int cmd_extract_features(const RunConfig& cfg, const std::string& data,
                         const std::string& out, const std::string& ground_truth_path,
                         double stride, bool training) {
  json ground_truth = json::object();
  if (!ground_truth_path.empty()) {
    std::ifstream in(ground_truth_path);
    if (!in) throw gssm::ConfigError("cannot open " + ground_truth_path);
    in >> ground_truth;
  }
  const auto events = load_reconstructed(data, cfg);
  std::ofstream os(out);
  if (!os) throw gssm::Error("cannot write " + out);
  uint64_t index = 0;
  long written = 0;
  for (const auto& event : events) {
    const auto times = sample_times_for(event, ground_truth, stride);
    for (const gssm::AgentTrack* obj : event.objects()) {
      for (double t : times) {
        gssm::FeatureOptions opt;
        opt.include_accel = cfg.model.include_accel;
        opt.training_mode = training;
        opt.dropout_p = cfg.model.dropout;
        opt.seed = gssm::mix_seed(cfg.seed, index);
        ++index;
        try {
          const auto sample = gssm::extract_features(event, event.subject().agent_id,
                                                     obj->agent_id, t, opt);
          os << gssm::sample_to_jsonl(sample) << "\n";
          ++written;
        } catch (const gssm::FeatureError&) {
          continue;
        }
      }
    }
  }
  write_manifest(fs::path(out).parent_path(), "extract-features", cfg,
                 {{"data", data}, {"samples", written}});
  std::cerr << "extract-features: wrote " << written << " samples to " << out << "\n";
  return 0;
}

std::vector<gssm::InteractionSample> read_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw gssm::Error("cannot open samples " + path);
  std::vector<gssm::InteractionSample> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) samples.push_back(gssm::sample_from_jsonl(line));
  }
  return samples;
}

int cmd_train(const RunConfig& cfg, const std::string& data, const std::string& out,
              double val_frac) {
  auto samples = read_samples(data);
  if (samples.size() < 10) throw gssm::TrainingError("too few samples to train");
  std::vector<size_t> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  gssm::Rng rng(gssm::mix_seed(cfg.seed, 0x51));
  rng.shuffle(order);
  const auto n_val = std::max<size_t>(1, static_cast<size_t>(val_frac * samples.size()));
  std::vector<gssm::InteractionSample> train_set, val_set;
  for (size_t i = 0; i < order.size(); ++i) {
    (i < order.size() - n_val ? train_set : val_set).push_back(samples[order[i]]);
  }

  auto model = gssm::DensityModel::init(cfg.model, train_set);
  std::vector<gssm::EpochLog> log;
  model = gssm::train(std::move(model), train_set, val_set, &log);
  model.save(out);
  gssm::write_training_log(fs::path(out).replace_extension(".log.csv"), log);
  write_manifest(fs::path(out).parent_path(), "train", cfg,
                 {{"data", data},
                  {"train_samples", train_set.size()},
                  {"val_samples", val_set.size()},
                  {"best_val", model.best_val},
                  {"epochs", model.epoch}});
  std::cerr << "train: best validation NLL " << model.best_val << " after epoch "
            << model.epoch << "\n";
  return 0;
}

int cmd_infer(const RunConfig& cfg, const std::string& model_path, const std::string& data,
              const std::string& event_id, const std::string& pair, const std::string& out) {
  const auto model = gssm::DensityModel::load(model_path);
  const fs::path event_file = fs::path(data) / (event_id + ".json");
  if (!fs::exists(event_file)) {
    throw gssm::ArgumentError("event file not found: " + event_file.string());
  }
  const gssm::Event event =
      gssm::reconstruct_event(gssm::reindex_objects(gssm::load_event(event_file)), cfg.ekf);
  const auto [subject_id, object_id] = parse_pair(pair);
  const auto series = gssm::risk_series(event, model, subject_id, object_id);
  std::vector<double> time, level, prob;
  for (const auto& pt : series) {
    time.push_back(pt.time);
    level.push_back(pt.level);
    prob.push_back(pt.probability);
  }
  gssm::write_risk_csv(out, event.event_id, object_id, time, level, prob);
  write_manifest(fs::path(out).parent_path(), "infer", cfg,
                 {{"model", model_path}, {"event", event_id}, {"pair", pair}});
  std::cerr << "infer: " << series.size() << " risk points -> " << out << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& model_path, const std::string& data,
                 const std::string& out, const std::string& scorer_names) {
  std::optional<gssm::DensityModel> model;
  if (!model_path.empty()) model = gssm::DensityModel::load(model_path);
  const auto scorers = make_scorers(scorer_names, model ? &*model : nullptr, {});
  std::vector<const gssm::RiskScorer*> ptrs;
  for (const auto& s : scorers) ptrs.push_back(s.get());

  const auto events = load_reconstructed(data, cfg);
  const auto result = gssm::evaluate_events(events, ptrs, cfg.evaluation);

  fs::create_directories(out);
  for (const auto& [name, report] : result.reports) {
    gssm::write_eval_report(out, report);
  }
  json conflicts;
  for (const auto& [event_id, object_id] : result.conflict_ids) {
    conflicts[event_id] = object_id.empty() ? json() : json(object_id);
  }
  std::ofstream cf(fs::path(out) / "conflicts.json");
  cf << conflicts.dump(2) << "\n";
  write_manifest(out, "evaluate", cfg, {{"model", model_path}, {"data", data}});
  for (const auto& [name, report] : result.reports) {
    std::cerr << "evaluate: " << name << " AUPRC " << report.auprc << " maxF1 "
              << report.max_f1 << "\n";
  }
  return 0;
}

int cmd_attribute(const RunConfig& cfg, const std::string& model_path,
                  const std::string& data, const std::string& event_id,
                  const std::string& pair, const std::string& refs_path, int k,
                  int eg_samples, const std::string& out) {
  const auto model = gssm::DensityModel::load(model_path);
  const fs::path event_file = fs::path(data) / (event_id + ".json");
  const gssm::Event event =
      gssm::reconstruct_event(gssm::reindex_objects(gssm::load_event(event_file)), cfg.ekf);
  const auto [subject_id, object_id] = parse_pair(pair);

  // Reference centres from the provided sample file (training reprs).
  const auto ref_samples = read_samples(refs_path);
  if (static_cast<int>(ref_samples.size()) < k) {
    throw gssm::ArgumentError("need at least k samples for references");
  }
  Eigen::MatrixXd reprs(ref_samples.size(),
                        model.config.n_tokens() * model.config.repr_dim);
  for (size_t i = 0; i < ref_samples.size(); ++i) {
    const Eigen::MatrixXd theta = model.encode(ref_samples[i]);
    Eigen::Index at = 0;
    for (Eigen::Index r = 0; r < theta.rows(); ++r) {
      for (Eigen::Index c = 0; c < theta.cols(); ++c) {
        reprs(static_cast<Eigen::Index>(i), at++) = theta(r, c);
      }
    }
  }
  const auto refs = gssm::reference_centers(reprs, k, gssm::mix_seed(cfg.seed, 0xA7));

  fs::create_directories(out);
  std::ofstream csv(fs::path(out) / "attribution.csv");
  csv << "event_id,time,token_name,attribution\n";
  const auto names = model.token_names();

  gssm::PeriodSpec periods;
  bool annotated = event.annotations.impact_time.has_value();
  if (annotated) periods = gssm::build_periods(event);

  std::vector<gssm::AttributionVector> danger_steps, safe_steps;
  gssm::FeatureOptions opt;
  opt.include_accel = model.config.include_accel;
  uint64_t index = 0;
  for (const gssm::AgentTrack* obj : event.objects()) {
    if (obj->agent_id != object_id) continue;
    for (const auto& frame : obj->frames) {
      gssm::InteractionSample sample;
      try {
        sample = gssm::extract_features(event, subject_id, object_id, frame.time, opt);
      } catch (const gssm::FeatureError&) {
        continue;
      }
      const Eigen::MatrixXd theta = model.encode(sample);
      const gssm::ModelRiskFunction f(model, sample.spacing);
      const auto attribution = gssm::expected_gradients(
          f, theta, refs, eg_samples, gssm::mix_seed(cfg.seed, 0xE6 + index));
      ++index;
      for (size_t t = 0; t < attribution.per_token.size(); ++t) {
        csv << event.event_id << ',' << gssm::format_double(frame.time) << ',' << names[t]
            << ',' << gssm::format_double(attribution.per_token[t]) << "\n";
      }
      if (annotated) {
        if (frame.time >= periods.danger_start - 1e-9 &&
            frame.time <= periods.danger_end + 1e-9) {
          danger_steps.push_back(attribution);
        } else if (frame.time < periods.danger_start) {
          safe_steps.push_back(attribution);
        }
      }
    }
  }

  json ranking;
  const auto count_json = [&](const std::vector<gssm::AttributionVector>& steps,
                              gssm::PeriodKind kind) {
    json counts = json::object();
    if (steps.empty()) return counts;
    for (const auto& [token, count] : gssm::top_factors(steps, kind)) {
      counts[names[static_cast<size_t>(token)]] = count;
    }
    return counts;
  };
  ranking["danger"] = count_json(danger_steps, gssm::PeriodKind::kDanger);
  ranking["safe"] = count_json(safe_steps, gssm::PeriodKind::kSafe);
  std::ofstream rank_out(fs::path(out) / "factor_ranking.json");
  rank_out << ranking.dump(2) << "\n";

  write_manifest(out, "attribute", cfg,
                 {{"model", model_path}, {"event", event_id}, {"pair", pair}});
  std::cerr << "attribute: wrote attribution.csv and factor_ranking.json\n";
  return 0;
}

// --- curves (SVG rendering) --------------------------------------------------

struct Series {
  std::string label;
  std::vector<double> x, y;
};

void render_svg(const fs::path& path, const std::string& title, const std::string& x_label,
                const std::string& y_label, const std::vector<Series>& series,
                double x_max_hint) {
  const int W = 640, H = 480, L = 70, B = 50, T = 40, R = 20;
  double x_max = x_max_hint, y_max = 1.0;
  for (const auto& s : series) {
    for (double v : s.x) {
      if (std::isfinite(v)) x_max = std::max(x_max, v);
    }
  }
  if (!(x_max > 0)) x_max = 1.0;
  const auto px = [&](double x) { return L + (W - L - R) * (x / x_max); };
  const auto py = [&](double y) { return H - B - (H - T - B) * (y / y_max); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b"};

  std::ofstream svg(path);
  if (!svg) throw gssm::Error("cannot write " + path.string());
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
  svg << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R << "' y2='" << H - B
      << "' stroke='black'/>\n";
  svg << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='" << H - B
      << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = x_max * i / 5.0;
    const double fy = y_max * i / 5.0;
    svg << "<text x='" << px(fx) << "' y='" << H - B + 18
        << "' text-anchor='middle' font-size='11'>" << gssm::format_double(std::round(fx * 100) / 100)
        << "</text>\n";
    svg << "<text x='" << L - 8 << "' y='" << py(fy) + 4
        << "' text-anchor='end' font-size='11'>" << gssm::format_double(fy) << "</text>\n";
  }
  svg << "<text x='" << (L + W - R) / 2 << "' y='" << H - 10
      << "' text-anchor='middle' font-size='13'>" << x_label << "</text>\n";
  svg << "<text x='18' y='" << (T + H - B) / 2
      << "' text-anchor='middle' font-size='13' transform='rotate(-90 18 "
      << (T + H - B) / 2 << ")'>" << y_label << "</text>\n";

  int color = 0;
  int legend_y = T + 10;
  for (const auto& s : series) {
    svg << "<polyline fill='none' stroke='" << colors[color % 6] << "' stroke-width='1.5' points='";
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      svg << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    svg << "'/>\n";
    svg << "<text x='" << W - R - 150 << "' y='" << legend_y << "' font-size='12' fill='"
        << colors[color % 6] << "'>" << s.label << "</text>\n";
    legend_y += 16;
    ++color;
  }
  svg << "</svg>\n";
}

std::vector<std::array<double, 8>> read_points_csv(const fs::path& path) {
  std::vector<std::array<double, 8>> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<double, 8> row{};
    std::stringstream ss(line);
    std::string field;
    for (int i = 0; i < 8 && std::getline(ss, field, ','); ++i) {
      row[i] = field.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(field);
    }
    rows.push_back(row);
  }
  return rows;
}

int cmd_curves(const RunConfig& cfg, const std::string& report_dir, const std::string& out) {
  fs::create_directories(out);
  std::vector<std::string> scorers;
  for (const auto& entry : fs::directory_iterator(report_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "roc.csv")) {
      scorers.push_back(entry.path().filename().string());
    }
  }
  std::sort(scorers.begin(), scorers.end());
  if (scorers.empty()) throw gssm::ArgumentError("no scorer reports under " + report_dir);

  std::vector<Series> roc, prc, atc;
  for (const auto& name : scorers) {
    const fs::path dir = fs::path(report_dir) / name;
    Series r{name, {}, {}}, p{name, {}, {}}, a{name, {}, {}};
    for (const auto& row : read_points_csv(dir / "roc.csv")) {
      r.x.push_back(row[1]);              // R_FP
      r.y.push_back(1.0 - row[2]);        // recall
    }
    for (const auto& row : read_points_csv(dir / "prc.csv")) {
      p.x.push_back(row[4]);
      p.y.push_back(row[3]);
    }
    for (const auto& row : read_points_csv(dir / "atc.csv")) {
      a.x.push_back(row[6]);
      a.y.push_back(row[5]);
    }
    roc.push_back(std::move(r));
    prc.push_back(std::move(p));
    atc.push_back(std::move(a));
  }
  render_svg(fs::path(out) / "roc.svg", "Receiver operating characteristic", "R_FP",
             "1 - R_FN", roc, 1.0);
  render_svg(fs::path(out) / "prc.svg", "Precision-recall", "Recall", "Precision", prc, 1.0);
  render_svg(fs::path(out) / "atc.svg", "Accuracy-timeliness", "mTTI (s)", "F1", atc, 1.0);
  write_manifest(out, "curves", cfg, {{"report", report_dir}});
  std::cerr << "curves: wrote roc.svg, prc.svg, atc.svg\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-conditioned collision risk quantification pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed_flag;
  int workers_flag = 0;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed_flag, "global seed override");
  app.add_option("--workers", workers_flag, "worker threads across events");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();

  // reconstruct
  auto* reconstruct = app.add_subcommand("reconstruct", "EKF trajectory reconstruction");
  std::string rec_data, rec_out;
  reconstruct->add_option("--data", rec_data, "raw event directory")->required();
  reconstruct->add_option("--out", rec_out, "output directory")->required();

  // extract-features
  auto* extract = app.add_subcommand("extract-features", "build interaction samples");
  std::string ef_data, ef_out, ef_gt;
  double ef_stride = 1.0;
  bool ef_training = false;
  extract->add_option("--data", ef_data, "raw event directory")->required();
  extract->add_option("--out", ef_out, "output JSONL file")->required();
  extract->add_option("--ground-truth", ef_gt, "ground_truth.json with sample times");
  extract->add_option("--stride", ef_stride, "sampling stride in seconds");
  extract->add_flag("--training", ef_training, "apply history dropout");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the density model");
  std::string tr_data, tr_out;
  double tr_val_frac = 0.2;
  train_cmd->add_option("--data", tr_data, "samples JSONL")->required();
  train_cmd->add_option("--out", tr_out, "checkpoint path")->required();
  train_cmd->add_option("--val-frac", tr_val_frac, "validation fraction");

  // infer
  auto* infer = app.add_subcommand("infer", "risk series for one pair");
  std::string in_model, in_data, in_event, in_pair, in_out;
  infer->add_option("--model", in_model, "checkpoint")->required();
  infer->add_option("--data", in_data, "raw event directory")->required();
  infer->add_option("--event", in_event, "event id")->required();
  infer->add_option("--pair", in_pair, "subject_id:object_id")->required();
  infer->add_option("--out", in_out, "risk CSV path")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "full evaluation protocol");
  std::string ev_model, ev_data, ev_out;
  std::string ev_scorers = "gssm,ttc2d,tadv,act,spacing";
  evaluate->add_option("--model", ev_model, "checkpoint (needed for gssm scorer)");
  evaluate->add_option("--data", ev_data, "raw event directory")->required();
  evaluate->add_option("--out", ev_out, "report directory")->required();
  evaluate->add_option("--scorers", ev_scorers, "comma-separated scorer list");

  // attribute
  auto* attribute = app.add_subcommand("attribute", "expected-gradients attribution");
  std::string at_model, at_data, at_event, at_pair, at_refs, at_out;
  int at_k = 32, at_samples = 200;
  attribute->add_option("--model", at_model, "checkpoint")->required();
  attribute->add_option("--data", at_data, "raw event directory")->required();
  attribute->add_option("--event", at_event, "event id")->required();
  attribute->add_option("--pair", at_pair, "subject_id:object_id")->required();
  attribute->add_option("--refs", at_refs, "samples JSONL for reference clustering")->required();
  attribute->add_option("--k", at_k, "number of reference centres");
  attribute->add_option("--samples", at_samples, "Monte-Carlo draws per attribution");
  attribute->add_option("--out", at_out, "output directory")->required();

  // curves
  auto* curves = app.add_subcommand("curves", "render ROC/PRC/ATC SVGs");
  std::string cv_report, cv_out;
  curves->add_option("--report", cv_report, "evaluation report directory")->required();
  curves->add_option("--out", cv_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = load_config(config_path, seed_flag, workers_flag);
    if (synth->parsed()) {
      const auto dataset = gssm::generate_dataset(cfg.generator);
      gssm::write_dataset(dataset, synth_out);
      write_manifest(synth_out, "synth", cfg);
      std::cerr << "synth: wrote " << dataset.events.size() << " events to " << synth_out
                << "\n";
      return 0;
    }
    if (reconstruct->parsed()) {
      const auto events = load_reconstructed(rec_data, cfg);
      fs::create_directories(rec_out);
      for (const auto& event : events) {
        gssm::save_event(event, fs::path(rec_out) / (event.event_id + ".json"));
      }
      write_manifest(rec_out, "reconstruct", cfg, {{"data", rec_data}});
      std::cerr << "reconstruct: " << events.size() << " events -> " << rec_out << "\n";
      return 0;
    }
    if (extract->parsed()) {
      return cmd_extract_features(cfg, ef_data, ef_out, ef_gt, ef_stride, ef_training);
    }
    if (train_cmd->parsed()) return cmd_train(cfg, tr_data, tr_out, tr_val_frac);
    if (infer->parsed()) return cmd_infer(cfg, in_model, in_data, in_event, in_pair, in_out);
    if (evaluate->parsed()) return cmd_evaluate(cfg, ev_model, ev_data, ev_out, ev_scorers);
    if (attribute->parsed()) {
      return cmd_attribute(cfg, at_model, at_data, at_event, at_pair, at_refs, at_k,
                           at_samples, at_out);
    }
    if (curves->parsed()) return cmd_curves(cfg, cv_report, cv_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

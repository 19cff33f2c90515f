#include "hetmac/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

namespace hetmac {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw InvalidParameter("config: " + path + ": " + what);
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

void reject_unknown(const json& j, const std::string& path,
                    std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return it.key() == k; });
    if (!known) fail(path + "." + it.key(), "unknown key");
  }
}

template <class T>
void take(const json& j, const char* key, const std::string& path, T* out) {
  if (!j.contains(key)) return;
  try {
    *out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(path + "." + key, e.what());
  }
}

template <class T, std::size_t N>
void take_array(const json& j, const char* key, const std::string& path,
                std::array<T, N>* out) {
  if (!j.contains(key)) return;
  std::vector<T> v;
  take(j, key, path, &v);
  if (v.size() != N)
    fail(path + "." + key, "expected exactly " + std::to_string(N) + " values");
  std::copy(v.begin(), v.end(), out->begin());
}

void take_hash_mode(const json& j, const char* key, const std::string& path,
                    HashMode* out) {
  if (!j.contains(key)) return;
  std::string s;
  take(j, key, path, &s);
  if (s == "redraw")
    *out = HashMode::REDRAW;
  else if (s == "fixed-id")
    *out = HashMode::FIXED_ID;
  else
    fail(path + "." + key, "expected \"redraw\" or \"fixed-id\"");
}

void parse_sweep_axis(const json& j, const std::string& path, SweepAxis* out) {
  require_object(j, path);
  reject_unknown(j, path, {"variable", "from", "to", "step"});
  take(j, "variable", path, &out->variable);
  take(j, "from", path, &out->from);
  take(j, "to", path, &out->to);
  take(j, "step", path, &out->step);
  if (!(out->step > 0)) fail(path + ".step", "must be > 0");
  if (out->to < out->from) fail(path + ".to", "must be >= from");
}

void parse_estimate(const json& j, EstimateSweepConfig* out) {
  const std::string path = "estimate";
  require_object(j, path);
  reject_unknown(j, path,
                 {"T", "D", "n_all", "s_w", "hash_mode", "q", "sweep", "reps"});
  take(j, "T", path, &out->T);
  take(j, "D", path, &out->D);
  take(j, "n_all", path, &out->n_all);
  take(j, "s_w", path, &out->s_w);
  take_hash_mode(j, "hash_mode", path, &out->hash_mode);
  take(j, "q", path, &out->q);
  if (j.contains("sweep")) parse_sweep_axis(j.at("sweep"), path + ".sweep", &out->sweep);
  take(j, "reps", path, &out->reps);
  if (out->T < 2 || out->T > 12) fail(path + ".T", "must be in [2, 12]");
  if (out->D < 1) fail(path + ".D", "must be >= 1");
  if (out->n_all < static_cast<std::uint64_t>(out->D))
    fail(path + ".n_all", "must be >= D");
  if (out->s_w < 1) fail(path + ".s_w", "must be >= 1");
  if (out->reps < 1) fail(path + ".reps", "must be >= 1");
  if (out->q.empty()) out->q.assign(out->T, 0.2);
  if (static_cast<int>(out->q.size()) != out->T)
    fail(path + ".q", "expected one probability per class");
  for (double qi : out->q)
    if (!(qi >= 0.0 && qi <= 1.0)) fail(path + ".q", "entries must be in [0, 1]");
  const std::string& v = out->sweep.variable;
  bool ok = v == "q";
  for (int b = 1; b <= out->T && !ok; ++b) ok = v == "q" + std::to_string(b);
  if (!ok) fail(path + ".sweep.variable", "expected \"q\" or \"q1\"..\"qT\"");
}

void parse_threshold(const json& j, ThresholdSweepConfig* out) {
  const std::string path = "threshold";
  require_object(j, path);
  reject_unknown(j, path, {"T_values", "D", "n_all", "s_w", "reps", "q_tol"});
  take(j, "T_values", path, &out->T_values);
  take(j, "D", path, &out->D);
  take(j, "n_all", path, &out->n_all);
  take(j, "s_w", path, &out->s_w);
  take(j, "reps", path, &out->reps);
  take(j, "q_tol", path, &out->q_tol);
  if (out->T_values.empty()) fail(path + ".T_values", "must be non-empty");
  for (int T : out->T_values)
    if (T < 2 || T > 12) fail(path + ".T_values", "entries must be in [2, 12]");
  if (out->D < 1) fail(path + ".D", "must be >= 1");
  if (out->n_all < static_cast<std::uint64_t>(out->D))
    fail(path + ".n_all", "must be >= D");
  if (out->s_w < 1) fail(path + ".s_w", "must be >= 1");
  if (out->reps < 1) fail(path + ".reps", "must be >= 1");
  if (!(out->q_tol > 0 && out->q_tol <= 0.25)) fail(path + ".q_tol", "must be in (0, 0.25]");
}

void parse_mac(const json& j, const std::string& path, MacConfig* out) {
  require_object(j, path);
  reject_unknown(j, path,
                 {"num_channels", "z", "nodes_per_class", "lambda", "weights",
                  "caps", "frame_slots", "bw1_cap", "bw2_slots", "s_w",
                  "hash_mode", "id_bits", "three_empty_limit", "gamma", "mode",
                  "force_exact_estimates"});
  take(j, "num_channels", path, &out->num_channels);
  take(j, "z", path, &out->z);
  take(j, "nodes_per_class", path, &out->nodes_per_class);
  take_array(j, "lambda", path, &out->lambda);
  take_array(j, "weights", path, &out->weights);
  take_array(j, "caps", path, &out->caps);
  take(j, "frame_slots", path, &out->frame_slots);
  take(j, "bw1_cap", path, &out->bw1_cap);
  take(j, "bw2_slots", path, &out->bw2_slots);
  take(j, "s_w", path, &out->s_w);
  take_hash_mode(j, "hash_mode", path, &out->hash_mode);
  take(j, "id_bits", path, &out->id_bits);
  take(j, "three_empty_limit", path, &out->three_empty_limit);
  if (j.contains("gamma")) {
    const json& g = j.at("gamma");
    const std::string gp = path + ".gamma";
    require_object(g, gp);
    reject_unknown(g, gp, {"idle", "tx", "rx"});
    take(g, "idle", gp, &out->gamma_I);
    take(g, "tx", gp, &out->gamma_T);
    take(g, "rx", gp, &out->gamma_R);
  }
  if (j.contains("mode")) {
    std::string s;
    take(j, "mode", path, &s);
    if (s == "proposed")
      out->mode = MacMode::PROPOSED;
    else if (s == "ideal")
      out->mode = MacMode::IDEAL;
    else
      fail(path + ".mode", "expected \"proposed\" or \"ideal\"");
  }
  take(j, "force_exact_estimates", path, &out->force_exact_estimates);
}

void parse_macsim(const json& j, MacSimSweepConfig* out) {
  const std::string path = "mac";
  require_object(j, path);
  reject_unknown(j, path,
                 {"config", "lambda_sweep", "modes", "frames", "warmup",
                  "batches", "per_frame_csv"});
  if (j.contains("config")) parse_mac(j.at("config"), path + ".config", &out->mac);
  take(j, "lambda_sweep", path, &out->lambda_sweep);
  if (j.contains("modes")) {
    std::vector<std::string> names;
    take(j, "modes", path, &names);
    out->modes.clear();
    for (const std::string& s : names) {
      if (s == "proposed")
        out->modes.push_back(MacMode::PROPOSED);
      else if (s == "ideal")
        out->modes.push_back(MacMode::IDEAL);
      else
        fail(path + ".modes", "expected \"proposed\" or \"ideal\"");
    }
  }
  take(j, "frames", path, &out->frames);
  take(j, "warmup", path, &out->warmup);
  take(j, "batches", path, &out->batches);
  take(j, "per_frame_csv", path, &out->per_frame_csv);
  if (out->lambda_sweep.empty()) fail(path + ".lambda_sweep", "must be non-empty");
  for (double l : out->lambda_sweep)
    if (l < 0) fail(path + ".lambda_sweep", "entries must be >= 0");
  if (out->modes.empty()) fail(path + ".modes", "must be non-empty");
  if (out->frames < 1) fail(path + ".frames", "must be >= 1");
  if (out->warmup < 0) fail(path + ".warmup", "must be >= 0");
  if (out->batches < 1) fail(path + ".batches", "must be >= 1");
}

void parse_analysis(const json& j, AnalysisTableConfig* out) {
  const std::string path = "analysis";
  require_object(j, path);
  reject_unknown(j, path,
                 {"T_values", "n_values", "s_values", "s_w", "mc_reps",
                  "W_values", "d_values", "n_mac_values", "frame_samples"});
  take(j, "T_values", path, &out->T_values);
  take(j, "n_values", path, &out->n_values);
  take(j, "s_values", path, &out->s_values);
  take(j, "s_w", path, &out->s_w);
  take(j, "mc_reps", path, &out->mc_reps);
  take(j, "W_values", path, &out->W_values);
  take(j, "d_values", path, &out->d_values);
  take(j, "n_mac_values", path, &out->n_mac_values);
  take(j, "frame_samples", path, &out->frame_samples);
  for (int T : out->T_values)
    if (T < 2 || T > 12) fail(path + ".T_values", "entries must be in [2, 12]");
  for (double n : out->n_values)
    if (n < 0) fail(path + ".n_values", "entries must be >= 0");
  for (int s : out->s_values)
    if (s < 0) fail(path + ".s_values", "entries must be >= 0");
  if (out->s_w < 1) fail(path + ".s_w", "must be >= 1");
  if (out->mc_reps < 0) fail(path + ".mc_reps", "must be >= 0");
  for (int w : out->W_values)
    if (w < 0) fail(path + ".W_values", "entries must be >= 0");
  for (int d : out->d_values)
    if (d < 0) fail(path + ".d_values", "entries must be >= 0");
  for (int n : out->n_mac_values)
    if (n < 1) fail(path + ".n_mac_values", "entries must be >= 1");
  if (out->frame_samples < 0) fail(path + ".frame_samples", "must be >= 0");
}

} // namespace

ExperimentConfig parse_config_json(const std::string& text,
                                   const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidParameter("config: " + origin + ": " + e.what());
  }
  require_object(j, origin);
  reject_unknown(j, "$",
                 {"kind", "seed", "out", "reps", "jobs", "estimate",
                  "threshold", "mac", "analysis"});
  ExperimentConfig cfg;
  take(j, "kind", "$", &cfg.kind);
  take(j, "seed", "$", &cfg.seed);
  take(j, "out", "$", &cfg.out);
  take(j, "reps", "$", &cfg.reps);
  take(j, "jobs", "$", &cfg.jobs);
  static const char* kKinds[] = {"estimate-sweep", "threshold-sweep",
                                 "mac-sim", "analysis-table", "validate"};
  if (std::none_of(std::begin(kKinds), std::end(kKinds),
                   [&](const char* k) { return cfg.kind == k; }))
    fail("$.kind", "expected one of estimate-sweep | threshold-sweep | "
                   "mac-sim | analysis-table | validate");
  if (cfg.reps < 0) fail("$.reps", "must be >= 0");
  if (cfg.jobs < 1) fail("$.jobs", "must be >= 1");
  if (j.contains("estimate")) parse_estimate(j.at("estimate"), &cfg.estimate);
  if (j.contains("threshold")) parse_threshold(j.at("threshold"), &cfg.threshold);
  if (j.contains("mac")) parse_macsim(j.at("mac"), &cfg.macsim);
  if (j.contains("analysis")) parse_analysis(j.at("analysis"), &cfg.analysis);
  if (cfg.estimate.q.empty()) cfg.estimate.q.assign(cfg.estimate.T, 0.2);
  // MacConfig checks (ranges, z length) run in normalize_config at use time;
  // surface them now so a bad file fails before any work starts.
  if (cfg.kind == "mac-sim") normalize_config(cfg.macsim.mac);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidParameter("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str(), path);
}

const char* hash_mode_name(HashMode m) {
  return m == HashMode::REDRAW ? "redraw" : "fixed-id";
}

const char* mac_mode_name(MacMode m) {
  return m == MacMode::PROPOSED ? "proposed" : "ideal";
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
  json j;
  j["kind"] = cfg.kind;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out;
  j["reps"] = cfg.reps;
  j["jobs"] = cfg.jobs;
  {
    const EstimateSweepConfig& e = cfg.estimate;
    json je;
    je["T"] = e.T;
    je["D"] = e.D;
    je["n_all"] = e.n_all;
    je["s_w"] = e.s_w;
    je["hash_mode"] = hash_mode_name(e.hash_mode);
    je["q"] = e.q;
    je["sweep"] = {{"variable", e.sweep.variable},
                   {"from", e.sweep.from},
                   {"to", e.sweep.to},
                   {"step", e.sweep.step}};
    je["reps"] = e.reps;
    j["estimate"] = je;
  }
  {
    const ThresholdSweepConfig& t = cfg.threshold;
    j["threshold"] = {{"T_values", t.T_values}, {"D", t.D},
                      {"n_all", t.n_all},       {"s_w", t.s_w},
                      {"reps", t.reps},         {"q_tol", t.q_tol}};
  }
  {
    const MacSimSweepConfig& m = cfg.macsim;
    const MacConfig mc = normalize_config(m.mac);
    json jm;
    jm["config"] = {
        {"num_channels", mc.num_channels},
        {"z", mc.z},
        {"nodes_per_class", mc.nodes_per_class},
        {"lambda", mc.lambda},
        {"weights", mc.weights},
        {"caps", mc.caps},
        {"frame_slots", mc.frame_slots},
        {"bw1_cap", mc.bw1_cap},
        {"bw2_slots", mc.bw2_slots},
        {"s_w", mc.s_w},
        {"hash_mode", hash_mode_name(mc.hash_mode)},
        {"id_bits", mc.id_bits},
        {"three_empty_limit", mc.three_empty_limit},
        {"gamma",
         {{"idle", mc.gamma_I}, {"tx", mc.gamma_T}, {"rx", mc.gamma_R}}},
        {"mode", mac_mode_name(mc.mode)},
        {"force_exact_estimates", mc.force_exact_estimates}};
    jm["lambda_sweep"] = m.lambda_sweep;
    json modes = json::array();
    for (MacMode md : m.modes) modes.push_back(mac_mode_name(md));
    jm["modes"] = modes;
    jm["frames"] = m.frames;
    jm["warmup"] = m.warmup;
    jm["batches"] = m.batches;
    jm["per_frame_csv"] = m.per_frame_csv;
    j["mac"] = jm;
  }
  {
    const AnalysisTableConfig& a = cfg.analysis;
    j["analysis"] = {{"T_values", a.T_values},
                     {"n_values", a.n_values},
                     {"s_values", a.s_values},
                     {"s_w", a.s_w},
                     {"mc_reps", a.mc_reps},
                     {"W_values", a.W_values},
                     {"d_values", a.d_values},
                     {"n_mac_values", a.n_mac_values},
                     {"frame_samples", a.frame_samples}};
  }
  return j.dump();
}

} // namespace hetmac

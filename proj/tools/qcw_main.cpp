// qcw: quantum-emitter coherence workbench CLI.
//
// Subcommands: simulate | correlate (hbt/hom) | fit (tcspc/scan/mi/hbt/hom/rabi) | report.
// Exit codes: 0 success, 2 usage error, 3 data/format error, 4 fit did not converge.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "qcw/bloch.hpp"
#include "qcw/correlator.hpp"
#include "qcw/emitter.hpp"
#include "qcw/fitting.hpp"
#include "qcw/io.hpp"
#include "qcw/lineshape.hpp"
#include "qcw/version.hpp"

namespace {

using json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNoConvergence = 4;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (const unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

json provenance_block(const std::string& command, std::uint64_t seed, const json& config) {
  json block;
  block["command"] = command;
  block["version"] = qcw::kVersion;
  block["seed"] = seed;
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%016llx",
                static_cast<unsigned long long>(fnv1a(config.dump())));
  block["config_hash"] = buffer;
  return block;
}

void write_sidecar(const std::filesystem::path& out, const json& doc) {
  std::ofstream sidecar(out.string() + ".prov.json", std::ios::trunc);
  sidecar << doc.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// config parsing with field-path diagnostics
// ---------------------------------------------------------------------------

double get_number(const json& node, const std::string& path, const std::string& label,
                  double fallback, bool required = false) {
  // label is the dotted field path; the lookup key is its last component
  const std::size_t dot = label.rfind('.');
  const std::string key = dot == std::string::npos ? label : label.substr(dot + 1);
  if (!node.contains(key)) {
    if (required) throw qcw::ParseError(path, 0, "missing required field ." + label);
    return fallback;
  }
  if (!node.at(key).is_number())
    throw qcw::ParseError(path, 0, "field ." + label + " must be a number");
  return node.at(key).get<double>();
}

struct SimulateConfig {
  qcw::EmitterConfig emitter;
  qcw::DetectionConfig detection;
  qcw::ChannelRouting routing;
  json raw;
};

SimulateConfig load_simulate_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw qcw::IoError("cannot open config: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw qcw::ParseError(path.string(), 0, std::string("invalid JSON: ") + e.what());
  }

  SimulateConfig cfg;
  cfg.raw = doc;
  const std::string p = path.string();

  if (doc.contains("emitter")) {
    const json& e = doc.at("emitter");
    auto& em = cfg.emitter;
    em.t1_x_ns = get_number(e, p, "emitter.t1_x_ns", em.t1_x_ns);
    em.t1_xx_ns = get_number(e, p, "emitter.t1_xx_ns", em.t1_xx_ns);
    em.pump_rate_per_ns = get_number(e, p, "emitter.pump_rate_per_ns", em.pump_rate_per_ns);
    em.pure_dephasing_rate_per_ns =
        get_number(e, p, "emitter.pure_dephasing_rate_per_ns", em.pure_dephasing_rate_per_ns);
    if (e.contains("mode")) {
      const std::string mode = e.at("mode").get<std::string>();
      if (mode == "two_level")
        em.mode = qcw::EmitterMode::two_level;
      else if (mode == "cascade")
        em.mode = qcw::EmitterMode::cascade;
      else
        throw qcw::ParseError(p, 0, "field .emitter.mode must be two_level or cascade");
    }
    if (e.contains("blinkers")) {
      if (!e.at("blinkers").is_array())
        throw qcw::ParseError(p, 0, "field .emitter.blinkers must be an array");
      for (const json& b : e.at("blinkers")) {
        qcw::TelegraphConfig t;
        t.on_rate_per_ns = get_number(b, p, "emitter.blinkers[].on_rate_per_ns", 0.0, true);
        t.off_rate_per_ns = get_number(b, p, "emitter.blinkers[].off_rate_per_ns", 0.0, true);
        em.blinkers.push_back(t);
      }
    }
    if (e.contains("spectral_diffusion")) {
      const json& sd = e.at("spectral_diffusion");
      em.spectral_diffusion.sigma_rad_s =
          get_number(sd, p, "emitter.spectral_diffusion.sigma_rad_s", 0.0);
      em.spectral_diffusion.corr_time_ns =
          get_number(sd, p, "emitter.spectral_diffusion.corr_time_ns", 1.0);
    }
  }
  if (doc.contains("detection")) {
    const json& d = doc.at("detection");
    auto& det = cfg.detection;
    det.efficiency = get_number(d, p, "detection.efficiency", det.efficiency);
    det.jitter_sigma_ps = get_number(d, p, "detection.jitter_sigma_ps", det.jitter_sigma_ps);
    if (d.contains("irf_fwhm_ps"))  // convenience: derive per-detector jitter
      det.jitter_sigma_ps =
          qcw::jitter_sigma_for_irf_fwhm(get_number(d, p, "detection.irf_fwhm_ps", 0.0));
    det.dead_time_ps = get_number(d, p, "detection.dead_time_ps", det.dead_time_ps);
    det.dark_rate_per_ns = get_number(d, p, "detection.dark_rate_per_ns", det.dark_rate_per_ns);
  }
  if (doc.contains("routing")) {
    const json& r = doc.at("routing");
    if (r.contains("kind")) {
      const std::string kind = r.at("kind").get<std::string>();
      if (kind == "beamsplitter")
        cfg.routing.kind = qcw::RoutingKind::beamsplitter;
      else if (kind == "by_transition")
        cfg.routing.kind = qcw::RoutingKind::by_transition;
      else if (kind == "single")
        cfg.routing.kind = qcw::RoutingKind::single_channel;
      else
        throw qcw::ParseError(p, 0, "field .routing.kind must be beamsplitter, by_transition or single");
    }
    cfg.routing.channel_a = static_cast<std::int32_t>(get_number(r, p, "routing.channel_a", 0.0));
    cfg.routing.channel_b = static_cast<std::int32_t>(get_number(r, p, "routing.channel_b", 1.0));
  }
  try {
    qcw::validate(cfg.emitter);
    qcw::validate(cfg.detection);
  } catch (const qcw::DomainError& e) {
    throw qcw::ParseError(p, 0, e.what());
  }
  return cfg;
}

std::vector<double> parse_grid(const std::string& spec) {
  // "start:stop:n" inclusive grid
  const auto c1 = spec.find(':');
  const auto c2 = spec.find(':', c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos)
    throw CLI::ValidationError("grid", "expected start:stop:n");
  const double start = std::stod(spec.substr(0, c1));
  const double stop = std::stod(spec.substr(c1 + 1, c2 - c1 - 1));
  const int n = std::stoi(spec.substr(c2 + 1));
  if (n < 2) throw CLI::ValidationError("grid", "need at least 2 points");
  std::vector<double> grid(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    grid[static_cast<std::size_t>(i)] = start + (stop - start) * i / (n - 1);
  return grid;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config_path;
  std::string out_path;
  std::string kind{"stream"};
  std::string hom_pol{"co"};
  double duration_ns{1e6};
  double delta_t_ns{14.3};
  std::uint64_t seed{1};
  std::string mi_delays{"0:2000:41"};
  std::string scan_range{"-12:12:61"};
};

int cmd_simulate(const SimulateArgs& args) {
  const SimulateConfig cfg = args.config_path.empty()
                                 ? SimulateConfig{}
                                 : load_simulate_config(args.config_path);
  json prov = provenance_block("simulate " + args.kind, args.seed, cfg.raw);
  const std::filesystem::path out = args.out_path;

  if (args.kind == "stream" || args.kind == "hom") {
    const auto photons = qcw::simulate_stream(cfg.emitter, args.duration_ns, args.seed);
    std::uint64_t n_x = 0, n_xx = 0;
    for (const auto& photon : photons) {
      if (photon.transition == qcw::Transition::X) ++n_x;
      if (photon.transition == qcw::Transition::XX) ++n_xx;
    }
    prov["photons"] = {{"total", photons.size()}, {"X", n_x}, {"XX", n_xx}};

    qcw::TagStream stream;
    if (args.kind == "hom") {
      const qcw::HomPolarization pol = args.hom_pol == "cross" ? qcw::HomPolarization::cross
                                                               : qcw::HomPolarization::co;
      const auto hom = qcw::simulate_hom(photons, cfg.emitter, args.duration_ns, args.delta_t_ns,
                                         pol, cfg.detection, args.seed + 1);
      stream = hom.tags;
      prov["hom"] = {{"polarization", args.hom_pol},
                     {"delta_t_ns", args.delta_t_ns},
                     {"pairs_formed", hom.pairs_formed},
                     {"short_delay_warning", hom.short_delay_warning}};
    } else {
      stream = qcw::apply_detection(photons, args.duration_ns, cfg.detection, cfg.routing,
                                    args.seed + 1);
    }
    prov["tags"] = stream.tags.size();
    qcw::write_tags(stream, out);
    write_sidecar(out, prov);
    return kExitOk;
  }

  if (args.kind == "mi") {
    const auto delays = parse_grid(args.mi_delays);
    const auto points = qcw::simulate_mi_visibility(cfg.emitter, delays, args.seed);
    qcw::XySeries series;
    series.kind = "mi";
    series.x_label = "delay_ps";
    series.y_label = "visibility";
    for (const auto& point : points) {
      series.x.push_back(point.delay_ps);
      series.y.push_back(point.visibility);
    }
    qcw::write_xy(series, out);
    write_sidecar(out, prov);
    return kExitOk;
  }

  if (args.kind == "scan") {
    const auto detunings = parse_grid(args.scan_range);
    const auto counts = qcw::simulate_rf_scan(cfg.emitter, detunings, args.seed);
    qcw::XySeries series;
    series.kind = "scan";
    series.x_label = "detuning_ghz";
    series.y_label = "counts";
    series.x = detunings;
    series.y = counts;
    qcw::write_xy(series, out);
    write_sidecar(out, prov);
    return kExitOk;
  }

  throw CLI::ValidationError("--kind", "unknown kind " + args.kind);
}

// ---------------------------------------------------------------------------
// correlate
// ---------------------------------------------------------------------------

struct CorrelateArgs {
  std::string mode;  // hbt | hom
  std::string in_path;
  std::string out_path;
  std::string pol;  // required for hom
  std::string norm{"far_wing"};
  std::int32_t channel_a{0};
  std::int32_t channel_b{1};
  std::int64_t bin_ps{10};
  double window_ns{500.0};
  double norm_lo_ns{400.0};
  double norm_hi_ns{500.0};
};

int cmd_correlate(const CorrelateArgs& args) {
  const qcw::TagStream stream = qcw::read_tags(args.in_path);
  qcw::CorrelationRequest req;
  req.channel_a = args.channel_a;
  req.channel_b = args.channel_b;
  req.bin_width_ps = args.bin_ps;
  req.window_ps = static_cast<std::int64_t>(args.window_ns * 1e3);
  req.norm_window_lo_ps = static_cast<std::int64_t>(args.norm_lo_ns * 1e3);
  req.norm_window_hi_ps = static_cast<std::int64_t>(args.norm_hi_ns * 1e3);

  qcw::Histogram hist = qcw::cross_correlate(stream, req);
  const qcw::NormalizationMethod method = args.norm == "poisson_rate"
                                              ? qcw::NormalizationMethod::poisson_rate
                                              : qcw::NormalizationMethod::far_wing;
  hist = qcw::normalize(std::move(hist), method, req);
  hist.meta.kind = args.mode == "hom" ? "hom_" + args.pol : "hbt";
  qcw::write_histogram(hist, args.out_path);

  json prov = provenance_block("correlate " + args.mode, 0, json::object());
  prov["bins"] = hist.counts.size();
  prov["normalization"] = hist.normalization;
  write_sidecar(args.out_path, prov);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
  std::string model;
  std::string in_path;
  std::string in_cross_path;
  std::string out_path;
  double irf_fwhm_ps{0.0};
  double delta_t_ns{14.3};
  bool tie_dip_to_tb{false};
  double pulse_fwhm_ps{10.0};
  std::string envelope{"gaussian"};
  bool fit_dephasing{false};
};

int cmd_fit(const FitArgs& args) {
  json derived;
  qcw::FitResult fit;

  if (args.model == "hbt") {
    const qcw::Histogram hist = qcw::read_histogram(args.in_path);
    const qcw::HbtFit result = qcw::fit_hbt(hist, args.irf_fwhm_ps);
    fit = result.fit;
    derived["g2_raw0"] = {{"value", result.g2_raw0.value}, {"sigma", result.g2_raw0.sigma}};
    derived["g2_decon0"] = {{"value", result.g2_decon0.value}, {"sigma", result.g2_decon0.sigma}};
    derived["irf_fwhm_ps"] = args.irf_fwhm_ps;
  } else if (args.model == "hom") {
    if (args.in_cross_path.empty())
      throw CLI::RequiredError("fit hom requires --in (co) and --in-cross");
    const qcw::Histogram co = qcw::read_histogram(args.in_path);
    const qcw::Histogram cross = qcw::read_histogram(args.in_cross_path);
    const qcw::HomFit result =
        qcw::fit_hom(co, cross, args.irf_fwhm_ps, args.delta_t_ns, args.tie_dip_to_tb);
    fit = result.fit_co;
    derived["v_raw"] = {{"value", result.v_raw.value}, {"sigma", result.v_raw.sigma}};
    derived["v_decon"] = {{"value", result.v_decon.value}, {"sigma", result.v_decon.sigma}};
    derived["g2_par0_raw"] = {{"value", result.g2_par0_raw.value}, {"sigma", result.g2_par0_raw.sigma}};
    derived["g2_perp0_raw"] = {{"value", result.g2_perp0_raw.value}, {"sigma", result.g2_perp0_raw.sigma}};
    derived["g2_par0_decon"] = {{"value", result.g2_par0_decon.value}, {"sigma", result.g2_par0_decon.sigma}};
    derived["g2_perp0_decon"] = {{"value", result.g2_perp0_decon.value}, {"sigma", result.g2_perp0_decon.sigma}};
    derived["dip_full_width_ns"] = result.dip_full_width_ns;
    derived["delta_t_ns"] = args.delta_t_ns;
    derived["irf_fwhm_ps"] = args.irf_fwhm_ps;
    json cross_fit;
    cross_fit["model"] = result.fit_cross.model;
    for (std::size_t i = 0; i < result.fit_cross.names.size(); ++i)
      cross_fit["params"][result.fit_cross.names[i]] = {
          {"value", result.fit_cross.values[i]}, {"sigma", result.fit_cross.sigmas[i]}};
    cross_fit["converged"] = result.fit_cross.converged;
    derived["cross_fit"] = cross_fit;
    if (!result.fit_cross.converged) fit.converged = false;
  } else if (args.model == "tcspc") {
    const qcw::XySeries decay = qcw::read_xy(args.in_path);
    const qcw::TcspcFit result = qcw::fit_tcspc(decay);
    fit = result.fit;
    derived["t1_ns"] = result.summary.t1_ns.value_or(0.0);
    derived["t2_ft_ns"] = result.summary.t2_ft_ns.value_or(0.0);
    derived["gamma_ft_ghz"] = result.summary.gamma_ft_ghz.value_or(0.0);
    derived["mono_fallback"] = result.mono_fallback;
  } else if (args.model == "scan") {
    const qcw::XySeries scan = qcw::read_xy(args.in_path);
    const qcw::ScanFit result = qcw::fit_scan(scan);
    fit = result.fit;
    derived["gamma_fwhm_ghz"] = {{"value", result.fwhm_ghz.value}, {"sigma", result.fwhm_ghz.sigma}};
    qcw::VoigtParams p = result.params;
    derived["t2_ns"] = qcw::coherence_time_ns(qcw::G1Curve::closed_form(p));
  } else if (args.model == "mi") {
    const qcw::XySeries vis = qcw::read_xy(args.in_path);
    const qcw::MiFit result = qcw::fit_mi(vis);
    fit = result.fit;
    derived["gamma_fwhm_ghz"] = {{"value", result.fwhm_ghz.value}, {"sigma", result.fwhm_ghz.sigma}};
    derived["t2_ns"] = {{"value", result.t2_ns.value}, {"sigma", result.t2_ns.sigma}};
  } else if (args.model == "rabi") {
    const qcw::XySeries data = qcw::read_xy(args.in_path);
    qcw::PulseConfig pulse;
    pulse.duration_fwhm_ps = args.pulse_fwhm_ps;
    pulse.envelope = args.envelope == "square" ? qcw::PulseEnvelope::square
                                               : qcw::PulseEnvelope::gaussian;
    const qcw::RabiFit result = qcw::fit_rabi(data.x, data.y, pulse, args.fit_dephasing);
    fit = result.fit;
    derived["fidelity"] = {{"value", result.fidelity}, {"sigma", result.fidelity_sigma}};
  } else {
    throw CLI::ValidationError("model", "unknown fit model " + args.model);
  }

  json extras;
  extras["derived"] = derived;
  extras["provenance"] = provenance_block("fit " + args.model, 0, json{{"in", args.in_path}});
  qcw::write_fit(fit, args.out_path, extras.dump());
  return fit.converged ? kExitOk : kExitNoConvergence;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct Row {
  std::string label;
  std::vector<double> values;
  bool best_is_min{true};
};

int cmd_report(const std::vector<std::string>& fit_paths, const std::string& out_path,
               bool print_text) {
  std::vector<Row> rows{
      {"gamma_fwhm_ghz", {}, true}, {"t2_ns", {}, false},          {"gamma_inhom_ghz", {}, true},
      {"gamma_hom_ghz", {}, true},  {"t1_ns", {}, false},          {"gamma_ft_ghz", {}, true},
      {"t2_ft_ns", {}, false},
  };
  auto row = [&rows](const std::string& label) -> Row& {
    for (Row& r : rows)
      if (r.label == label) return r;
    throw qcw::Error("internal: unknown report row " + label);
  };

  std::vector<double> inhom_values, hom_values;
  for (const std::string& path : fit_paths) {
    std::ifstream in(path);
    if (!in) throw qcw::IoError("cannot open fit file: " + path);
    json doc;
    try {
      in >> doc;
    } catch (const json::parse_error& e) {
      throw qcw::ParseError(path, 0, std::string("invalid JSON: ") + e.what());
    }
    const std::string model = doc.value("model", "");
    const json derived = doc.value("derived", json::object());
    if (model == "scan" || model == "mi") {
      const json& params = doc.at("params");
      const double gamma_hom = params.at("gamma_hom_ghz").at("value").get<double>();
      const double gamma_inhom = params.at("gamma_inhom_ghz").at("value").get<double>();
      row("gamma_hom_ghz").values.push_back(gamma_hom);
      row("gamma_inhom_ghz").values.push_back(gamma_inhom);
      hom_values.push_back(gamma_hom);
      inhom_values.push_back(gamma_inhom);
      if (derived.contains("gamma_fwhm_ghz"))
        row("gamma_fwhm_ghz").values.push_back(derived.at("gamma_fwhm_ghz").at("value").get<double>());
      if (derived.contains("t2_ns")) {
        const json& t2 = derived.at("t2_ns");
        row("t2_ns").values.push_back(t2.is_object() ? t2.at("value").get<double>()
                                                     : t2.get<double>());
      }
    } else if (model == "tcspc" || model == "tcspc_mono") {
      row("t1_ns").values.push_back(doc.at("params").at("tau1_ns").at("value").get<double>());
      if (derived.contains("gamma_ft_ghz"))
        row("gamma_ft_ghz").values.push_back(derived.at("gamma_ft_ghz").get<double>());
      if (derived.contains("t2_ft_ns"))
        row("t2_ft_ns").values.push_back(derived.at("t2_ft_ns").get<double>());
    } else {
      throw qcw::ParseError(path, 0, "report cannot aggregate model '" + model +
                                         "' (expected scan, mi or tcspc fits)");
    }
  }

  json out;
  out["rows"] = json::object();
  std::string text = "value               mean        sigma       best\n";
  for (const Row& r : rows) {
    if (r.values.empty()) continue;
    const std::size_t n = r.values.size();
    double mean = 0.0;
    for (const double v : r.values) mean += v;
    mean /= static_cast<double>(n);
    std::optional<double> sigma;
    if (n > 1) {
      double ss = 0.0;
      for (const double v : r.values) ss += (v - mean) * (v - mean);
      sigma = std::sqrt(ss / static_cast<double>(n - 1));
    }
    const double best = r.best_is_min ? *std::min_element(r.values.begin(), r.values.end())
                                      : *std::max_element(r.values.begin(), r.values.end());
    json jr;
    jr["mean"] = mean;
    if (sigma)
      jr["sigma"] = *sigma;
    else
      jr["sigma"] = nullptr;
    jr["best"] = best;
    jr["n"] = n;
    out["rows"][r.label] = jr;
    char line[160];
    if (sigma)
      std::snprintf(line, sizeof(line), "%-18s %-11.4g %-11.4g %-11.4g\n", r.label.c_str(), mean,
                    *sigma, best);
    else
      std::snprintf(line, sizeof(line), "%-18s %-11.4g %-11s %-11.4g\n", r.label.c_str(), mean,
                    "-", best);
    text += line;
  }

  // both readings of the aggregate coherence time: mean of per-fit T2 values
  // (above) and T2 evaluated at the mean fitted widths
  if (!inhom_values.empty()) {
    double mean_hom = 0.0, mean_inhom = 0.0;
    for (const double v : hom_values) mean_hom += v;
    for (const double v : inhom_values) mean_inhom += v;
    mean_hom /= static_cast<double>(hom_values.size());
    mean_inhom /= static_cast<double>(inhom_values.size());
    qcw::VoigtParams p;
    p.gamma_hom_ghz = std::max(mean_hom, 1e-12);
    p.gamma_inhom_ghz = mean_inhom;
    out["t2_of_mean_widths_ns"] = qcw::coherence_time_ns(qcw::G1Curve::closed_form(p));
  }

  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::trunc);
    f << out.dump(2) << "\n";
  }
  if (print_text || out_path.empty()) std::cout << text;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quantum-emitter coherence workbench"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "generate photon streams and scan data");
  simulate->add_option("--config", sim.config_path, "emitter/detection JSON config");
  simulate->add_option("--out", sim.out_path, "output file")->required();
  simulate->add_option("--kind", sim.kind, "stream | hom | mi | scan")
      ->check(CLI::IsMember({"stream", "hom", "mi", "scan"}));
  simulate->add_option("--hom-pol", sim.hom_pol, "co | cross (kind=hom)")
      ->check(CLI::IsMember({"co", "cross"}));
  simulate->add_option("--duration-ns", sim.duration_ns, "acquisition length in ns");
  simulate->add_option("--delta-t-ns", sim.delta_t_ns, "HOM interferometer delay in ns");
  simulate->add_option("--seed", sim.seed, "RNG seed");
  simulate->add_option("--mi-delays-ps", sim.mi_delays, "delay grid start:stop:n (kind=mi)");
  simulate->add_option("--scan-range-ghz", sim.scan_range, "detuning grid start:stop:n (kind=scan)");

  CorrelateArgs corr;
  CLI::App* correlate = app.add_subcommand("correlate", "build normalized g2 histograms");
  correlate->add_option("mode", corr.mode, "hbt | hom")->required()
      ->check(CLI::IsMember({"hbt", "hom"}));
  correlate->add_option("--in", corr.in_path, "tag file")->required();
  correlate->add_option("--out", corr.out_path, "histogram file")->required();
  correlate->add_option("--pol", corr.pol, "co | cross (required for hom)")
      ->check(CLI::IsMember({"co", "cross"}));
  correlate->add_option("--a", corr.channel_a, "first channel");
  correlate->add_option("--b", corr.channel_b, "second channel");
  correlate->add_option("--bin-ps", corr.bin_ps, "bin width in ps");
  correlate->add_option("--window-ns", corr.window_ns, "correlation half-window, +- ns");
  correlate->add_option("--norm", corr.norm, "far_wing | poisson_rate")
      ->check(CLI::IsMember({"far_wing", "poisson_rate"}));
  correlate->add_option("--norm-lo-ns", corr.norm_lo_ns, "far-wing window start |tau|");
  correlate->add_option("--norm-hi-ns", corr.norm_hi_ns, "far-wing window end |tau|");

  FitArgs fit;
  CLI::App* fitcmd = app.add_subcommand("fit", "fit analysis models");
  fitcmd->add_option("model", fit.model, "tcspc | scan | mi | hbt | hom | rabi")->required()
      ->check(CLI::IsMember({"tcspc", "scan", "mi", "hbt", "hom", "rabi"}));
  fitcmd->add_option("--in", fit.in_path, "input data file")->required();
  fitcmd->add_option("--in-cross", fit.in_cross_path, "cross-polarized histogram (hom)");
  fitcmd->add_option("--out", fit.out_path, "fit JSON output")->required();
  fitcmd->add_option("--irf-fwhm-ps", fit.irf_fwhm_ps, "Gaussian IRF FWHM in ps");
  fitcmd->add_option("--delta-t-ns", fit.delta_t_ns, "HOM interferometer delay in ns");
  fitcmd->add_flag("--tie-dip-to-tb", fit.tie_dip_to_tb, "lock HOM dip timescale to T_b");
  fitcmd->add_option("--pulse-fwhm-ps", fit.pulse_fwhm_ps, "pulse FWHM for rabi fits");
  fitcmd->add_option("--envelope", fit.envelope, "gaussian | square (rabi)")
      ->check(CLI::IsMember({"gaussian", "square"}));
  fitcmd->add_flag("--fit-dephasing", fit.fit_dephasing, "free dephasing rate in rabi fits");

  std::vector<std::string> report_inputs;
  std::string report_out;
  bool report_text = false;
  CLI::App* report = app.add_subcommand("report", "aggregate fits into a coherence table");
  report->add_option("fits", report_inputs, "fit JSON files")->required();
  report->add_option("--out", report_out, "report JSON output");
  report->add_flag("--text", report_text, "print the text table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim);
    if (*correlate) {
      if (corr.mode == "hom" && corr.pol.empty()) {
        std::cerr << "correlate hom requires --pol co|cross\n";
        return kExitUsage;
      }
      return cmd_correlate(corr);
    }
    if (*fitcmd) return cmd_fit(fit);
    if (*report) return cmd_report(report_inputs, report_out, report_text);
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const qcw::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const qcw::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const qcw::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

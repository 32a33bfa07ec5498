#pragma once

#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lorenz/export.hpp"
#include "lorenz/validate.hpp"

namespace lorenz::cli {

inline constexpr const char* kOutputEnv = "LORENZ_OUTPUT_DIR";

struct RunConfig {
  std::string command;
  std::string model_path;
  std::string output_dir;
  int k = 4;
  int m = 0;  // 0: derived from k
  int q = 10;
  int depth = 12;
  long steps = 200'000'000;
  int m_s = 2;
  std::string eps = "2^-10";
  std::string tol = "2^-30";
  std::string smax = "20";
  std::string field = "circle";
  std::string field_params = "{}";
  std::string point = "0.5,1";
  std::string start = "0.3,5,0";
  std::string horizon = "10000";
  std::string phi = "x2";
  unsigned threads = 1;
  long seed = 0;
};

namespace detail {

inline Dyadic dyadic_arg(const std::string& name, const std::string& text) {
  // Accepts decimal strings, "m*2^e", "2^e" and p/q with power-of-two q.
  mpq_class q;
  const auto caret = text.find("2^");
  if (caret != std::string::npos) {
    const std::string head = text.substr(0, caret);
    long e = 0;
    try {
      e = std::stol(text.substr(caret + 2));
    } catch (const std::exception&) {
      throw ConfigError(name + ": malformed dyadic '" + text + "'");
    }
    Dyadic m(1);
    if (!head.empty()) {
      if (head.back() != '*') throw ConfigError(name + ": malformed dyadic '" + text + "'");
      m = dyadic_arg(name, head.substr(0, head.size() - 1));
    }
    return m * Dyadic::pow2(e);
  }
  try {
    if (text.find('/') != std::string::npos) {
      if (q.set_str(text, 10) != 0 || q.get_den() == 0) throw ConfigError("bad fraction");
      q.canonicalize();
    } else {
      q = parse_rational(text);
    }
  } catch (const Error&) {
    throw ConfigError(name + ": malformed number '" + text + "'");
  }
  if (!is_dyadic(q)) throw ConfigError(name + ": '" + text + "' is not a dyadic rational");
  return to_dyadic(q);
}

inline std::vector<Dyadic> dyadic_list(const std::string& name, const std::string& text, std::size_t count) {
  std::vector<Dyadic> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(dyadic_arg(name, item));
  if (out.size() != count) {
    throw ConfigError(name + ": expected " + std::to_string(count) + " comma-separated values, got '" + text + "'");
  }
  return out;
}

inline void check_range(const std::string& name, long v, long lo, long hi) {
  if (v < lo || v > hi) {
    throw ConfigError(name + " = " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

inline nlohmann::json interval_json(const Interval& v) {
  return {{"lo", v.lo().to_decimal()}, {"hi", v.hi().to_decimal()}, {"lo_exact", v.lo().to_string()},
          {"hi_exact", v.hi().to_string()}};
}

inline Model load_model(const RunConfig& cfg) {
  ModelParams p;
  if (!cfg.model_path.empty()) {
    std::ifstream in(cfg.model_path);
    if (!in) throw ConfigError("cannot read model file '" + cfg.model_path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("model file: " + std::string(e.what()));
    }
    p = ModelParams::from_json(j);
  }
  return Model(p);
}

// Config-file keys, each bound to a field of RunConfig.
using Setter = std::function<void(RunConfig&, const nlohmann::json&)>;

template <typename T>
Setter setter(T RunConfig::*field) {
  return [field](RunConfig& c, const nlohmann::json& v) {
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        c.*field = v.is_string() ? v.get<std::string>() : v.dump();
      } else {
        c.*field = v.get<T>();
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config: wrong type for a value: " + v.dump());
    }
  };
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands. Each writes its files under out and returns the exit code.

inline int cmd_validate(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  ModelParams p;
  if (!cfg.model_path.empty()) p = detail::load_model(cfg).params();
  const ValidationReport rep = validate(p, cfg.depth);
  nlohmann::json j = rep.to_json();
  j["depth"] = cfg.depth;
  j["model"] = p.to_json();
  write_json(out / "validate.json", j);
  log << "validate: " << (rep.all_passed() ? "all properties pass" : "some properties fail") << '\n';
  return rep.all_passed() ? 0 : static_cast<int>(ExitCode::certificate);
}

inline int cmd_attractor(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const Model model = detail::load_model(cfg);
  const AttractorCertificate cert = compute_attractor(model, cfg.k);
  const std::string base = "attractor_k" + std::to_string(cfg.k);
  const Grid grid(model, cert.m);
  nlohmann::json j = cert.to_json();
  j["symmetric"] = cert.outer.symmetric();
  j["raster_downsample"] = std::max<std::uint32_t>(1, grid.side() / kMaxRasterSide);
  write_json(out / (base + ".json"), j);
  write_pgm(out / (base + ".pgm"), cert.outer);
  write_cells_csv(out / (base + "_cells.csv"), grid, cert.outer);
  write_points_csv(out / (base + "_inner.csv"), cert.inner);
  log << "attractor: k = " << cfg.k << ", n = " << cert.n << ", m = " << cert.m << ", " << cert.outer.size()
      << " cells, hausdorff(inner, outer) <= " << cert.inner_outer.hi().to_double() << '\n';
  return 0;
}

inline int cmd_suspension(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const Model model = detail::load_model(cfg);
  const Dyadic smax = detail::dyadic_arg("smax", cfg.smax);
  if (smax.sign() <= 0) throw ConfigError("smax must be positive");
  const AttractorCertificate cert = compute_attractor(model, cfg.k);
  const TubeCover tube = suspension_cover(model, cert, cfg.m_s, smax);
  const std::string base = "suspension_k" + std::to_string(cfg.k);
  write_tube_csv(out / (base + ".csv"), tube);
  write_tube_pgm_stack(out / (base + "_layers.pgm"), tube);
  write_visualization_ppm(out / (base + ".ppm"), model, tube);
  write_json(out / (base + ".json"), {{"k", cfg.k},
                                      {"m", cert.m},
                                      {"m_s", cfg.m_s},
                                      {"s_max", smax.to_decimal()},
                                      {"columns", tube.columns().size()},
                                      {"boxes", tube.box_count()},
                                      {"truncated_columns", tube.truncated_count()},
                                      {"visualization_certified", false}});
  log << "suspension: " << tube.box_count() << " boxes, " << tube.truncated_count() << " truncated columns\n";
  return 0;
}

inline int cmd_return_time(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const Model model = detail::load_model(cfg);
  const Dyadic eps = detail::dyadic_arg("eps", cfg.eps);
  if (eps.sign() <= 0) throw ConfigError("eps must be positive");
  const auto pt = detail::dyadic_list("point", cfg.point, 2);
  nlohmann::json params;
  try {
    params = nlohmann::json::parse(cfg.field_params);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("field-params: " + std::string(e.what()));
  }
  if (!params.is_object()) throw ConfigError("field-params must be a JSON object");
  ReturnTimeResult r;
  nlohmann::json extra;
  if (cfg.field == "circle") {
    Dyadic y0(-20);
    for (const auto& [key, v] : params.items()) {
      if (key != "y0") throw ConfigError("circle field: unknown parameter '" + key + "'");
      y0 = detail::dyadic_arg("y0", v.is_string() ? v.get<std::string>() : v.dump());
    }
    const CircleField field(y0);
    r = return_time(field, field.section_point(pt[0], pt[1]), eps, model.domain(), static_cast<std::uint64_t>(cfg.steps));
    extra["analytic"] = "2*pi";
  } else if (cfg.field == "model-suspension") {
    if (!params.empty()) throw ConfigError("model-suspension field takes no parameters (use --model)");
    const ModelSuspensionField field(model);
    r = return_time(field, field.section_point(pt[0], pt[1]), eps, model.domain(), static_cast<std::uint64_t>(cfg.steps));
    extra["roof"] = detail::interval_json(model.roof(Interval(pt[0])));
  } else {
    throw ConfigError("unknown field '" + cfg.field + "' (circle, model-suspension)");
  }
  nlohmann::json j = r.to_json();
  j["field"] = cfg.field;
  j["start"] = {pt[0].to_decimal(), pt[1].to_decimal()};
  j["reference"] = extra;
  write_json(out / "return_time.json", j);
  log << "return-time: " << r.time.to_double() << " (eps " << eps.to_double() << ")\n";
  return 0;
}

inline int cmd_acim(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const Model model = detail::load_model(cfg);
  const Dyadic tol = detail::dyadic_arg("tol", cfg.tol);
  if (tol.sign() <= 0) throw ConfigError("tol must be positive");
  const DensityApprox d = ulam_acim(model, cfg.q, tol);
  const std::string base = "acim_q" + std::to_string(cfg.q);
  nlohmann::json j = d.to_json();
  j["tol"] = tol.to_string();
  j["roof_integral"] = nlohmann::json::array();
  for (int e : {8, 10, 12}) {
    j["roof_integral"].push_back(
        {{"eps_cut", Dyadic::pow2(-e).to_string()}, {"value", detail::interval_json(roof_integral(model, d, Dyadic::pow2(-e)))}});
  }
  write_json(out / (base + ".json"), j);
  write_density_csv(out / (base + ".csv"), d);
  log << "acim: q = " << cfg.q << ", " << d.iterations << " iterations, sup density " << d.sup_density.to_double() << '\n';
  return 0;
}

inline PhysicalMeasure measure_for(const Model& model, const RunConfig& cfg) {
  const Dyadic tol = detail::dyadic_arg("tol", cfg.tol);
  if (cfg.m == 0) return physical_measure(model, cfg.k, cfg.q, tol);
  SectionMeasure s;
  s.k = cfg.k;
  s.n = stopping_n(model.params(), cfg.k);
  s.m = cfg.m;
  s.rate_constant = Interval::enclose(hausdorff_tail(model.params(), s.n), Precision(64));
  s.acim = ulam_acim(model, cfg.q, tol);
  s.mu = pushforward(model, product_measure(s.acim, s.m), s.n);
  return suspend(model, std::move(s));
}

inline int cmd_measure(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const Model model = detail::load_model(cfg);
  const PhysicalMeasure pm = measure_for(model, cfg);
  const std::string base = "measure_k" + std::to_string(cfg.k);
  write_planar_csv(out / (base + "_muF.csv"), pm.section.mu);
  write_planar_pgm(out / (base + "_muF.pgm"), pm.section.mu);
  const Dyadic skipped = write_physical_csv(out / (base + "_mustar.csv"), model, pm, cfg.m_s);
  nlohmann::json j = pm.to_json();
  j["symmetry_l1"] = PlanarMeasure::l1(pm.section.mu, pm.section.mu.reflected());
  j["mustar_m_s"] = cfg.m_s;
  j["mustar_skipped_D_mass"] = skipped.to_decimal();
  write_json(out / (base + ".json"), j);
  log << "measure: m = " << pm.section.m << ", n = " << pm.section.n << ", " << pm.section.mu.support()
      << " cells, Z in [" << pm.Z.lo().to_double() << ", " << pm.Z.hi().to_double() << "]\n";
  return 0;
}

inline int cmd_integrate(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const Model model = detail::load_model(cfg);
  const Observable phi = make_observable(cfg.phi, model);
  const PhysicalMeasure pm = measure_for(model, cfg);
  const Interval v = integrate_observable(model, pm, phi);
  const Interval sec = integrate_observable(Grid(model, pm.section.m), pm.section.mu, phi);
  write_json(out / ("integrate_" + cfg.phi + "_k" + std::to_string(cfg.k) + ".json"),
             {{"phi", cfg.phi},
              {"k", cfg.k},
              {"m", pm.section.m},
              {"n", pm.section.n},
              {"lipschitz", phi.lipschitz.to_decimal()},
              {"mu_star", detail::interval_json(v)},
              {"mu_F_section", detail::interval_json(sec)},
              {"normalization", detail::interval_json(pm.normalization)}});
  log << "integrate " << cfg.phi << ": [" << v.lo().to_double() << ", " << v.hi().to_double() << "]\n";
  return 0;
}

inline int cmd_birkhoff(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const Model model = detail::load_model(cfg);
  const Observable phi = make_observable(cfg.phi, model);
  // The orbit is a diagnostic: decimal starts are rounded to the working grid.
  std::vector<Dyadic> st;
  {
    std::stringstream ss(cfg.start);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        st.push_back(rational_down(parse_rational(item), model.precision().bits));
      } catch (const Error&) {
        throw ConfigError("start: malformed number '" + item + "'");
      }
    }
    if (st.size() != 3) throw ConfigError("start: expected x,y,s");
  }
  const Dyadic T = detail::dyadic_arg("T", cfg.horizon);
  const BirkhoffResult r = birkhoff_average(model, {st[0], st[1], st[2]}, T, phi);
  nlohmann::json j = r.to_json();
  j["phi"] = cfg.phi;
  j["start"] = {st[0].to_decimal(), st[1].to_decimal(), st[2].to_decimal()};
  write_json(out / ("birkhoff_" + cfg.phi + ".json"), j);
  log << "birkhoff " << cfg.phi << ": " << r.average.to_double() << " over " << r.section_hits << " section hits\n";
  return 0;
}

// ---------------------------------------------------------------------------

inline void write_error(const fs::path& out, int code, const std::string& kind, const std::string& message) {
  try {
    write_json(out / "error.json", {{"exit_code", code}, {"kind", kind}, {"message", message}});
  } catch (...) {
    // The error is still reported on stderr.
  }
}

/// Parses argv-style arguments (without the program name), runs the
/// selected subcommand and returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  RunConfig cfg;
  const char* env = std::getenv(kOutputEnv);
  cfg.output_dir = env && *env ? env : "lorenz-out";
  std::string config_path;

  CLI::App app{"Rigorous numerics for a geometric Lorenz model", "lorenz"};
  app.fallthrough();
  app.require_subcommand(0, 1);
  std::map<std::string, CLI::Option*> opts;
  opts["model"] = app.add_option("--model", cfg.model_path, "model parameters (JSON)");
  opts["output"] = app.add_option("--out", cfg.output_dir, std::string("output directory (default $") + kOutputEnv + " or lorenz-out)");
  app.add_option("--config", config_path, "run configuration (JSON)");
  opts["k"] = app.add_option("--k", cfg.k, "accuracy level 2^-k");
  opts["m"] = app.add_option("--m", cfg.m, "grid resolution override for measure/integrate (0: from k)");
  opts["q"] = app.add_option("--q", cfg.q, "Ulam resolution 2^q cells");
  opts["depth"] = app.add_option("--depth", cfg.depth, "validator subdivision depth");
  opts["steps"] = app.add_option("--steps", cfg.steps, "step ceiling for return-time");
  opts["ms"] = app.add_option("--ms", cfg.m_s, "s-slab height 2^-ms");
  opts["eps"] = app.add_option("--eps", cfg.eps, "return-time accuracy (dyadic)");
  opts["tol"] = app.add_option("--tol", cfg.tol, "Ulam power-iteration tolerance (dyadic)");
  opts["smax"] = app.add_option("--smax", cfg.smax, "roof truncation height near D");
  opts["field"] = app.add_option("--field", cfg.field, "vector field: circle | model-suspension");
  opts["field_params"] = app.add_option("--field-params", cfg.field_params, "field parameters (JSON object)");
  opts["point"] = app.add_option("--point", cfg.point, "section start x,y");
  opts["start"] = app.add_option("--start", cfg.start, "suspension start x,y,s");
  opts["T"] = app.add_option("--T", cfg.horizon, "Birkhoff horizon");
  opts["phi"] = app.add_option("--phi", cfg.phi, "observable: one | x | x2 | y | s | hat");
  opts["threads"] = app.add_option("--threads", cfg.threads, "worker threads (does not change outputs)");
  opts["seed"] = app.add_option("--seed", cfg.seed, "seed for randomized property tests");

  const std::map<std::string, std::function<int(const RunConfig&, const fs::path&, std::ostream&)>> commands{
      {"validate", cmd_validate},   {"attractor", cmd_attractor}, {"suspension", cmd_suspension},
      {"return-time", cmd_return_time}, {"acim", cmd_acim},       {"measure", cmd_measure},
      {"integrate", cmd_integrate}, {"birkhoff", cmd_birkhoff}};
  for (const auto& [name, fn] : commands) app.add_subcommand(name, "run " + name);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    log << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    write_error(cfg.output_dir, static_cast<int>(ExitCode::config), "config", e.what());
    return static_cast<int>(ExitCode::config);
  }

  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot read config '" + config_path + "'");
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: " + std::string(e.what()));
      }
      if (!j.is_object()) throw ConfigError("config must be a JSON object");
      const std::map<std::string, detail::Setter> keys{
          {"command", detail::setter(&RunConfig::command)}, {"model", detail::setter(&RunConfig::model_path)},
          {"output", detail::setter(&RunConfig::output_dir)}, {"k", detail::setter(&RunConfig::k)},
          {"m", detail::setter(&RunConfig::m)},             {"q", detail::setter(&RunConfig::q)},
          {"depth", detail::setter(&RunConfig::depth)},     {"steps", detail::setter(&RunConfig::steps)},
          {"ms", detail::setter(&RunConfig::m_s)},          {"eps", detail::setter(&RunConfig::eps)},
          {"tol", detail::setter(&RunConfig::tol)},         {"smax", detail::setter(&RunConfig::smax)},
          {"field", detail::setter(&RunConfig::field)},     {"field_params", detail::setter(&RunConfig::field_params)},
          {"point", detail::setter(&RunConfig::point)},     {"start", detail::setter(&RunConfig::start)},
          {"T", detail::setter(&RunConfig::horizon)},       {"phi", detail::setter(&RunConfig::phi)},
          {"threads", detail::setter(&RunConfig::threads)}, {"seed", detail::setter(&RunConfig::seed)}};
      for (const auto& [key, value] : j.items()) {
        const auto it = keys.find(key);
        if (it == keys.end()) throw ConfigError("config: unknown key '" + key + "'");
        const auto o = opts.find(key);
        if (o != opts.end() && o->second->count() > 0) continue;  // the command line wins
        it->second(cfg, value);
      }
    }
    for (const auto* sub : app.get_subcommands()) cfg.command = sub->get_name();
    if (cfg.command.empty()) throw ConfigError("no subcommand given (" + std::string("validate, attractor, suspension, return-time, acim, measure, integrate, birkhoff)"));
    const auto cmd = commands.find(cfg.command);
    if (cmd == commands.end()) throw ConfigError("unknown command '" + cfg.command + "'");

    detail::check_range("k", cfg.k, 1, 8);
    detail::check_range("m", cfg.m, 0, 12);
    detail::check_range("q", cfg.q, 3, 20);
    detail::check_range("depth", cfg.depth, 1, 24);
    detail::check_range("steps", cfg.steps, 1, 4'000'000'000L);
    detail::check_range("ms", cfg.m_s, 0, 8);
    detail::check_range("threads", cfg.threads, 1, 256);
    set_threads(cfg.threads);
    std::error_code ec;
    fs::remove(fs::path(cfg.output_dir) / "error.json", ec);
    return cmd->second(cfg, cfg.output_dir, log);
  } catch (const Error& e) {
    err << "error (" << e.kind() << "): " << e.what() << '\n';
    write_error(cfg.output_dir, static_cast<int>(e.code()), e.kind(), e.what());
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error (resource): " << e.what() << '\n';
    return static_cast<int>(ExitCode::resource);
  } catch (const std::bad_alloc&) {
    err << "error (resource): out of memory\n";
    write_error(cfg.output_dir, static_cast<int>(ExitCode::resource), "resource", "out of memory");
    return static_cast<int>(ExitCode::resource);
  }
}

}  // namespace lorenz::cli

// Command-line front end: inference, energies, traces, gradient checks,
// toy fitting, fusion, metrics and the exact oracle.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "bcrf/bcrf.hpp"

namespace fs = std::filesystem;
using namespace bcrf;

namespace {

struct Common {
  long max_pixels = 16384;
  std::uint64_t seed = 0;
};

struct InputPaths {
  std::string image, probs, detections, config;
  double eps0 = kDefaultNoInstanceFloor;
};

void add_inputs(CLI::App* cmd, InputPaths& in, bool required) {
  cmd->add_option("--image", in.image, "RGB image (binary PPM or BTF1 [H,W,3])")->required(required);
  cmd->add_option("--probs", in.probs, "semantic probabilities, BTF1 [H,W,L]")->required(required);
  cmd->add_option("--detections", in.detections, "detections JSON")->required(required);
  cmd->add_option("--config", in.config, "config JSON")->required(required);
  cmd->add_option("--eps0", in.eps0, "no-instance floor inside detection masks");
}

void check_size(int h, int w, const Common& c) {
  if (static_cast<long>(h) * w > c.max_pixels)
    throw input_error("image has " + std::to_string(static_cast<long>(h) * w) + " pixels, limit is " +
                      std::to_string(c.max_pixels) + " (raise --max-pixels)");
}

struct Loaded {
  Field image, phi, psi;
  LabelSchema schema;
  BcrfParams params;
};

Loaded load_inputs(const InputPaths& in, const Common& c) {
  Loaded l;
  l.image = io::read_image(in.image);
  check_size(l.image.height, l.image.width, c);
  const Field probs = io::tensor_to_field(io::read_btf(in.probs));
  if (probs.height != l.image.height || probs.width != l.image.width)
    throw input_error("probabilities shape does not match image");
  io::Config cfg = io::load_config(in.config);
  l.phi = semantic_unary_from_probs(probs);
  const auto dets = io::read_detections(in.detections, l.image.height, l.image.width);
  const auto iu = instance_unary_from_detections(dets, l.image.height, l.image.width, in.eps0);
  l.psi = iu.psi;
  l.schema = cfg.schema;
  l.schema.instance_class = iu.instance_class;
  validate_schema(l.schema);
  if (l.phi.channels != l.schema.num_labels())
    throw input_error("probabilities have " + std::to_string(l.phi.channels) + " channels, schema has " +
                      std::to_string(l.schema.num_labels()) + " labels");
  l.params = cfg.params;
  return l;
}

Loaded from_problem(const synthetic::Problem& p) { return {p.image, p.phi, p.psi, p.schema, p.params}; }

void ensure_dir(const std::string& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw input_error("cannot create directory '" + d + "': " + ec.message());
}

std::string join(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

FuseMode parse_mode(const std::string& s) {
  if (s == "joint") return FuseMode::joint;
  if (s == "paste") return FuseMode::paste;
  throw input_error("--mode must be 'joint' or 'paste'");
}

void print_metrics(const PqReport& rep, const LabelSchema& schema) {
  std::printf("%-16s %8s %8s %8s %4s %4s %4s\n", "class", "PQ", "SQ", "RQ", "TP", "FP", "FN");
  for (const auto& c : rep.per_class)
    std::printf("%-16s %8.4f %8.4f %8.4f %4d %4d %4d\n", schema.label_names[static_cast<std::size_t>(c.label)].c_str(),
                c.pq, c.sq, c.rq, c.tp, c.fp, c.fn);
  auto row = [](const char* name, const QualitySummary& s) {
    std::printf("%-16s %8.4f %8.4f %8.4f %4d classes\n", name, s.pq, s.sq, s.rq, s.classes);
  };
  row("All", rep.all);
  row("Things", rep.things);
  row("Stuff", rep.stuff);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bipartite CRF panoptic inference"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--max-pixels", common.max_pixels, "largest accepted image (naive O(N^2) filtering)");
  app.add_option("--seed", common.seed, "seed for every randomized path");

  // infer
  InputPaths infer_in;
  std::string infer_out, infer_mode = "joint";
  bool infer_f64 = false;
  auto* infer = app.add_subcommand("infer", "run mean-field inference and fuse a panoptic map");
  add_inputs(infer, infer_in, true);
  infer->add_option("--out", infer_out, "output directory")->required();
  infer->add_option("--mode", infer_mode, "fusion mode: joint | paste");
  infer->add_flag("--f64", infer_f64, "write marginals as f64 instead of f32");

  // energy
  InputPaths energy_in;
  std::string energy_sem, energy_inst;
  auto* energy = app.add_subcommand("energy", "energy of a discrete labeling");
  add_inputs(energy, energy_in, true);
  energy->add_option("--semantic", energy_sem, "semantic labeling, BTF1 i32 [H,W]")->required();
  energy->add_option("--instance", energy_inst, "instance labeling, BTF1 i32 [H,W]")->required();

  // trace
  InputPaths trace_in;
  std::string trace_out;
  int trace_iters = -1, trace_size = 16;
  bool trace_synth = false;
  auto* trace = app.add_subcommand("trace", "free energy per mean-field iteration as CSV");
  add_inputs(trace, trace_in, false);
  trace->add_flag("--synthetic", trace_synth, "use a generated scene instead of input files");
  trace->add_option("--size", trace_size, "side of the generated scene");
  trace->add_option("--iterations", trace_iters, "iteration count (default: config)");
  trace->add_option("--out", trace_out, "CSV path (default: stdout)");

  // gradcheck
  int gc_h = 4, gc_w = 4, gc_labels = 3, gc_inst = 3, gc_iters = 5;
  double gc_step = 1e-4, gc_tol = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "reverse-mode gradients vs central differences");
  gradcheck->add_option("--height", gc_h);
  gradcheck->add_option("--width", gc_w);
  gradcheck->add_option("--labels", gc_labels);
  gradcheck->add_option("--instances", gc_inst, "instance channels including inst0");
  gradcheck->add_option("--iterations", gc_iters);
  gradcheck->add_option("--step", gc_step, "finite-difference step");
  gradcheck->add_option("--tol", gc_tol, "maximum accepted relative error");

  // fit
  int fit_samples = 20, fit_steps = 40;
  double fit_lr = 0.5;
  std::string fit_out, fit_config;
  auto* fit = app.add_subcommand("fit", "fit weights, mu and eta on a generated toy dataset");
  fit->add_option("--samples", fit_samples);
  fit->add_option("--steps", fit_steps);
  fit->add_option("--lr", fit_lr);
  fit->add_option("--config", fit_config, "initial parameters (default: built-in defaults)");
  fit->add_option("--out", fit_out, "output directory")->required();

  // metrics
  std::string m_ps, m_pi, m_gs, m_gi, m_config, m_json;
  auto* metrics = app.add_subcommand("metrics", "PQ / SQ / RQ of a prediction against ground truth");
  metrics->add_option("--pred-semantic", m_ps)->required();
  metrics->add_option("--pred-instance", m_pi)->required();
  metrics->add_option("--gt-semantic", m_gs)->required();
  metrics->add_option("--gt-instance", m_gi)->required();
  metrics->add_option("--config", m_config, "config JSON with the label schema")->required();
  metrics->add_option("--json", m_json, "also write the report as JSON");

  // fuse
  std::string f_q, f_r, f_config, f_dets, f_out, f_mode = "joint";
  double f_overlap = 0.5;
  int f_min_area = 16;
  auto* fuse = app.add_subcommand("fuse", "fuse marginals into a panoptic map");
  fuse->add_option("--q", f_q, "semantic marginals, BTF1 [H,W,L]")->required();
  fuse->add_option("--r", f_r, "instance marginals, BTF1 [H,W,T]")->required();
  fuse->add_option("--config", f_config)->required();
  fuse->add_option("--detections", f_dets, "detections JSON (instance classes); else schema.instance_classes");
  fuse->add_option("--mode", f_mode, "joint | paste");
  fuse->add_option("--overlap", f_overlap, "paste mode: minimum unclaimed fraction");
  fuse->add_option("--min-area", f_min_area, "paste mode: minimum instance area");
  fuse->add_option("--out", f_out, "output directory")->required();

  // oracle
  InputPaths or_in;
  int or_h = 2, or_w = 2, or_labels = 2, or_inst = 2;
  auto* oracle = app.add_subcommand("oracle", "exact MAP and marginals by enumeration");
  add_inputs(oracle, or_in, false);
  oracle->add_option("--height", or_h, "generated instance height");
  oracle->add_option("--width", or_w, "generated instance width");
  oracle->add_option("--labels", or_labels);
  oracle->add_option("--instances", or_inst, "instance channels including inst0");

  // sample
  std::string s_out;
  int s_size = 16;
  auto* sample = app.add_subcommand("sample", "write a generated scene as input files");
  sample->add_option("--out", s_out, "output directory")->required();
  sample->add_option("--size", s_size, "image side in pixels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (infer->parsed()) {
      const Loaded l = load_inputs(infer_in, common);
      const Model m = Model::from_image(l.schema, l.params, l.image);
      const auto res = run_inference(l.phi, l.psi, m);
      FuseOptions fo;
      fo.mode = parse_mode(infer_mode);
      const PanopticMap map = fuse_panoptic(res.marginals, l.schema, fo);
      ensure_dir(infer_out);
      const auto dt = infer_f64 ? io::Dtype::f64 : io::Dtype::f32;
      io::write_btf(join(infer_out, "q.btf"), io::field_to_tensor(res.marginals.q, dt));
      io::write_btf(join(infer_out, "r.btf"), io::field_to_tensor(res.marginals.r, dt));
      io::write_panoptic(join(infer_out, "semantic.btf"), join(infer_out, "instance.btf"), map);
      io::write_csv(join(infer_out, "trace.csv"), io::trace_csv(res.trace));
      io::write_ppm(join(infer_out, "preview.ppm"), io::panoptic_preview(map));
      std::printf("iterations %zu, final free energy %.6f\n", res.trace.records.size() - 1,
                  res.trace.records.back().free_energy);
    } else if (energy->parsed()) {
      const Loaded l = load_inputs(energy_in, common);
      const Model m = Model::from_image(l.schema, l.params, l.image);
      int h = 0, w = 0, h2 = 0, w2 = 0;
      const Labeling x = io::tensor_to_labeling(io::read_btf(energy_sem), h, w);
      const Labeling z = io::tensor_to_labeling(io::read_btf(energy_inst), h2, w2);
      if (h != l.image.height || w != l.image.width || h2 != h || w2 != w)
        throw input_error("labeling shape does not match image");
      std::printf("%s\n", io::format_real(total_energy(x, z, l.phi, l.psi, m)).c_str());
    } else if (trace->parsed()) {
      Loaded l;
      if (trace_synth) {
        synthetic::SceneOptions so;
        so.height = so.width = trace_size;
        l = from_problem(synthetic::scene_problem(common.seed, so));
        check_size(l.image.height, l.image.width, common);
      } else {
        if (trace_in.image.empty() || trace_in.probs.empty() || trace_in.detections.empty() || trace_in.config.empty())
          throw input_error("trace needs --image --probs --detections --config, or --synthetic");
        l = load_inputs(trace_in, common);
      }
      if (trace_iters >= 0) l.params.iterations = trace_iters;
      const Model m = Model::from_image(l.schema, l.params, l.image);
      RunOptions opts;
      opts.allow_early_stop = false;
      const auto res = run_inference(l.phi, l.psi, m, opts);
      const io::Csv csv = io::trace_csv(res.trace);
      if (trace_out.empty())
        std::fputs(csv.str().c_str(), stdout);
      else
        io::write_csv(trace_out, csv);
    } else if (gradcheck->parsed()) {
      auto p = synthetic::random_problem(common.seed, gc_h, gc_w, gc_labels, gc_inst);
      p.params.iterations = gc_iters;
      const Model m = Model::from_image(p.schema, p.params, p.image);
      const auto rep = grad_check(p.phi, p.psi, m, p.gt_semantic, p.gt_instance, gc_step);
      std::printf("%-14s %8s %14s %14s\n", "group", "entries", "max_rel_err", "max_abs_err");
      for (const auto& g : rep.groups)
        std::printf("%-14s %8zu %14.3e %14.3e\n", g.group.c_str(), g.entries, g.max_rel_error, g.max_abs_error);
      std::printf("loss %.10f, worst relative error %.3e (tolerance %.1e)\n", rep.loss, rep.worst(), gc_tol);
      if (!(rep.worst() < gc_tol)) {
        std::fprintf(stderr, "error: gradient check failed\n");
        return 2;
      }
    } else if (fit->parsed()) {
      std::vector<TrainingSample> ds;
      for (int k = 0; k < fit_samples; ++k) {
        synthetic::SceneOptions so;
        so.corrupt_first_object = true;
        so.min_size = 5;
        so.max_size = 8;
        so.semantic_confidence = 0.5;
        const auto p = synthetic::scene_problem(common.seed * 1000003ull + static_cast<std::uint64_t>(k), so);
        ds.push_back({p.image, p.phi, p.psi, p.schema, p.gt_semantic, p.gt_instance});
      }
      if (ds.empty()) throw input_error("--samples must be positive");
      LabelSchema schema = ds[0].schema;
      schema.instance_class.clear();
      BcrfParams p0 = default_params(schema);
      if (!fit_config.empty()) {
        const io::Config cfg = io::load_config(fit_config);
        if (cfg.schema.label_names != schema.label_names || cfg.schema.things != schema.things)
          throw input_error("fit config schema must match the toy dataset labels (sky, road, person, car)");
        p0 = cfg.params;
      }
      const FitResult res = fit_parameters(ds, p0, fit_steps, fit_lr);
      ensure_dir(fit_out);
      io::write_csv(join(fit_out, "fit_trace.csv"), io::fit_csv(res.loss_trace));
      io::write_csv(join(fit_out, "eta.csv"), io::eta_csv(schema, res.params.eta));
      io::write_json(join(fit_out, "params.json"), io::config_to_json(schema, res.params));
      if (res.aborted) {
        std::fprintf(stderr, "error: non-finite loss at step %zu\n", res.loss_trace.size() - 1);
        return 1;
      }
      std::printf("loss %.6f -> %.6f over %d steps\n", res.loss_trace.front(), res.loss_trace.back(), fit_steps);
    } else if (metrics->parsed()) {
      const io::Config cfg = io::load_config(m_config);
      const PanopticMap pred = io::read_panoptic(m_ps, m_pi);
      const PanopticMap gt = io::read_panoptic(m_gs, m_gi);
      const PqReport rep = pq_metrics(pred, gt, cfg.schema);
      if (rep.max_matches_per_gt > 1) throw invariant_error("a ground-truth segment matched twice");
      print_metrics(rep, cfg.schema);
      if (!m_json.empty()) {
        io::json doc = io::json::object();
        io::json classes = io::json::array();
        for (const auto& c : rep.per_class)
          classes.push_back({{"label", cfg.schema.label_names[static_cast<std::size_t>(c.label)]},
                             {"pq", c.pq}, {"sq", c.sq}, {"rq", c.rq}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}});
        doc["classes"] = classes;
        for (const auto& [name, s] : {std::pair{"all", rep.all}, std::pair{"things", rep.things},
                                      std::pair{"stuff", rep.stuff}})
          doc[name] = {{"pq", s.pq}, {"sq", s.sq}, {"rq", s.rq}, {"classes", s.classes}};
        io::write_json(m_json, doc);
      }
    } else if (fuse->parsed()) {
      io::Config cfg = io::load_config(f_config);
      MarginalPair s{io::tensor_to_field(io::read_btf(f_q)), io::tensor_to_field(io::read_btf(f_r))};
      check_size(s.q.height, s.q.width, common);
      if (!f_dets.empty()) {
        cfg.schema.instance_class.clear();
        for (const auto& d : io::read_detections(f_dets, s.q.height, s.q.width))
          cfg.schema.instance_class.push_back(d.class_id);
        validate_schema(cfg.schema);
      }
      // f32 storage loses a little mass; renormalize before checking
      for (Field* f : {&s.q, &s.r})
        for (int i = 0; i < f->pixels(); ++i) {
          double sum = 0.0;
          for (double v : f->row(i)) sum += v;
          if (!(sum > 0.0)) throw input_error("marginal row with no mass at pixel " + std::to_string(i));
          for (double& v : f->row(i)) v /= sum;
        }
      if (!satisfies_simplex(s, 1e-4)) throw input_error("marginals are not per-pixel distributions");
      FuseOptions fo;
      fo.mode = parse_mode(f_mode);
      fo.overlap_threshold = f_overlap;
      fo.min_area = f_min_area;
      const PanopticMap map = fuse_panoptic(s, cfg.schema, fo);
      ensure_dir(f_out);
      io::write_panoptic(join(f_out, "semantic.btf"), join(f_out, "instance.btf"), map);
      io::write_ppm(join(f_out, "preview.ppm"), io::panoptic_preview(map));
    } else if (oracle->parsed()) {
      Loaded l;
      if (!or_in.image.empty())
        l = load_inputs(or_in, common);
      else
        l = from_problem(synthetic::random_problem(common.seed, or_h, or_w, or_labels, or_inst));
      const Model m = Model::from_image(l.schema, l.params, l.image);
      const MapResult map = enumerate_map(l.phi, l.psi, m);
      const ExactMarginals ex = exact_marginals(l.phi, l.psi, m);
      io::json doc = {{"map_semantic", map.x},
                      {"map_instance", map.z},
                      {"map_energy", map.energy},
                      {"log_z", ex.log_z},
                      {"q", ex.marginals.q.data},
                      {"r", ex.marginals.r.data},
                      {"height", l.image.height},
                      {"width", l.image.width}};
      std::printf("%s\n", doc.dump(2).c_str());
    } else if (sample->parsed()) {
      synthetic::SceneOptions so;
      so.height = so.width = s_size;
      check_size(s_size, s_size, common);
      const auto p = synthetic::scene_problem(common.seed, so);
      ensure_dir(s_out);
      io::write_ppm(join(s_out, "image.ppm"), p.image);
      Field probs = softmax_rows(p.phi, -1.0);
      io::write_btf(join(s_out, "probs.btf"), io::field_to_tensor(probs, io::Dtype::f32));
      io::write_json(join(s_out, "detections.json"), io::detections_to_json(p.detections));
      LabelSchema schema = p.schema;
      schema.instance_class.clear();
      io::write_json(join(s_out, "config.json"), io::config_to_json(schema, p.params));
      io::write_panoptic(join(s_out, "gt_semantic.btf"), join(s_out, "gt_instance.btf"),
                         PanopticMap{p.image.height, p.image.width, p.gt_semantic, p.gt_instance});
    }
  } catch (const input_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const invariant_error& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
  return 0;
}

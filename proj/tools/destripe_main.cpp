// Command-line front end: detect, simulate, destripe, evaluate.

#include "destripe/checkpoint.hpp"
#include "destripe/error.hpp"
#include "destripe/parallel.hpp"
#include "destripe/pipeline.hpp"
#include "destripe/volume_io.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace destripe;

namespace {

enum Exit { kOk = 0, kIo = 1, kValidation = 2, kNumerical = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string report;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--seed", c.seed, "override rng_seed");
  cmd->add_option("--report", c.report, "JSON report path");
}

RunConfig config_of(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.rng_seed = *c.seed;
  return cfg;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  return fs::path(p.string() + suffix);
}

void print_warnings(const nlohmann::json& report) {
  if (!report.contains("warnings")) return;
  for (const auto& w : report["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stripe artifact removal for light-sheet volumes"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 1;
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  Common detect_opts;
  std::string detect_in, detect_out, detect_axis;
  auto* detect = app.add_subcommand("detect", "score spectral corruption and build the mask");
  detect->add_option("input", detect_in, "input volume")->required();
  detect->add_option("--out", detect_out, "output prefix for W and M")->required();
  detect->add_option("--stripe-axis", detect_axis, "horizontal, vertical, degrees or auto");
  add_common(detect, detect_opts);

  Common sim_opts;
  std::string sim_out, sim_model, sim_format = "raw";
  std::vector<Index> sim_shape = {8, 64, 64};
  auto* simulate = app.add_subcommand("simulate", "write a clean/stripes/degraded phantom triplet");
  simulate->add_option("--out", sim_out, "output directory")->required();
  simulate->add_option("--model", sim_model, "stripe model JSON");
  simulate->add_option("--shape", sim_shape, "depth rows cols")->expected(3)->delimiter(',');
  simulate->add_option("--format", sim_format, "raw or tiff")
      ->check(CLI::IsMember({"raw", "tiff"}));
  add_common(simulate, sim_opts);

  Common ds_opts;
  std::string ds_in, ds_out, ds_axis, ds_checkpoint, ds_save_checkpoint, ds_log;
  auto* destripe = app.add_subcommand("destripe", "train and apply the unrolled destriper");
  destripe->add_option("input", ds_in, "input volume")->required();
  destripe->add_option("--out", ds_out, "destriped volume")->required();
  destripe->add_option("--stripe-axis", ds_axis, "horizontal, vertical, degrees or auto");
  destripe->add_option("--checkpoint", ds_checkpoint, "load parameters and skip training");
  destripe->add_option("--save-checkpoint", ds_save_checkpoint,
                       "where to write parameters (default <out>.ckpt)");
  destripe->add_option("--log", ds_log, "training log CSV (default <out>.train.csv)");
  add_common(destripe, ds_opts);

  std::string eval_a, eval_b, eval_out;
  double eval_peak = 1.0;
  auto* evaluate = app.add_subcommand("evaluate", "PSNR and SSIM of a against reference b");
  evaluate->add_option("a", eval_a, "test volume")->required();
  evaluate->add_option("b", eval_b, "reference volume")->required();
  evaluate->add_option("--out", eval_out, "metrics JSON (default stdout)");
  evaluate->add_option("--peak", eval_peak, "signal peak")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    set_thread_count(threads);
    if (*detect) {
      const RunConfig cfg = config_of(detect_opts);
      const Volume v = load_volume(detect_in);
      const DetectResult r = run_detect(v, cfg, AxisChoice::parse(detect_axis));
      Volume w;
      w.data = r.field.W;
      w.spacing = v.spacing;
      w.stripe_axis = v.stripe_axis;
      save_volume(w, with_suffix(detect_out, ".W.raw"), VolumeFormat::raw_f32);
      save_mask(r.field.M, with_suffix(detect_out, ".M.raw"));
      write_json(detect_opts.report.empty() ? with_suffix(detect_out, ".report.json")
                                            : fs::path(detect_opts.report),
                 r.report);
      print_warnings(r.report);
      std::cout << "masked bins: " << r.report["masked_bin_count"] << ", stripe angle "
                << r.report["stripe_angle"] << " deg\n";
    } else if (*simulate) {
      const RunConfig cfg = config_of(sim_opts);
      StripeModel model;
      if (!sim_model.empty()) {
        std::ifstream in(sim_model);
        if (!in) throw IoError("cannot open stripe model " + sim_model);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
          throw ValidationError("stripe model is not valid JSON: " + std::string(e.what()));
        }
        model = stripe_model_from_json(j);
      }
      const Shape3 shape{sim_shape[0], sim_shape[1], sim_shape[2]};
      const SimulateResult r = run_simulate(shape, model, cfg.rng_seed);
      fs::create_directories(sim_out);
      const std::string ext = sim_format == "tiff" ? ".tif" : ".raw";
      save_volume(r.clean, fs::path(sim_out) / ("clean" + ext));
      save_volume(r.stripes, fs::path(sim_out) / ("stripes" + ext));
      save_volume(r.degraded, fs::path(sim_out) / ("degraded" + ext));
      write_json(fs::path(sim_out) / "stripe_model.json", to_json(model));
      write_json(sim_opts.report.empty() ? fs::path(sim_out) / "simulate_report.json"
                                         : fs::path(sim_opts.report),
                 r.report);
      std::cout << "degraded PSNR " << r.report["psnr_degraded_db"] << " dB\n";
    } else if (*destripe) {
      const RunConfig cfg = config_of(ds_opts);
      const Volume v = load_volume(ds_in);
      DestripeOptions opt;
      opt.axis = AxisChoice::parse(ds_axis);
      if (!ds_checkpoint.empty()) opt.load_checkpoint = ds_checkpoint;
      opt.on_epoch = [&](const EpochRecord& e) {
        if (e.epoch % 25 == 0 || e.epoch + 1 == cfg.train_epochs) {
          std::cerr << "epoch " << e.epoch << " loss " << e.loss.total << '\n';
        }
      };
      const DestripeResult r = run_destripe(v, cfg, opt);
      save_volume(r.output, ds_out);
      const fs::path ckpt =
          ds_save_checkpoint.empty() ? with_suffix(ds_out, ".ckpt") : fs::path(ds_save_checkpoint);
      if (r.trained || !ds_save_checkpoint.empty()) {
        save_checkpoint(ckpt, r.model.layout, r.params, r.checkpoint_extra);
      }
      if (r.trained) {
        const fs::path log = ds_log.empty() ? with_suffix(ds_out, ".train.csv") : fs::path(ds_log);
        std::ofstream out(log);
        if (!out) throw IoError("cannot write " + log.string());
        write_training_log(r.log, out);
      }
      write_json(ds_opts.report.empty() ? with_suffix(ds_out, ".report.json")
                                        : fs::path(ds_opts.report),
                 r.report);
      print_warnings(r.report);
    } else if (*evaluate) {
      const Volume a = load_volume(eval_a);
      const Volume b = load_volume(eval_b);
      if (!(a.shape() == b.shape())) throw ValidationError("volumes have different shapes");
      const nlohmann::json report = evaluate_report(a.data, b.data, eval_peak);
      if (eval_out.empty()) {
        std::cout << report.dump(2) << '\n';
      } else {
        write_json(eval_out, report);
      }
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kOk;
}

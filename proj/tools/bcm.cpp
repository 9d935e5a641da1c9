// Command-line front end: train, sample, eval, sweep, plot.
//
// Every config key is also a flag (--schedule.T 80, --backdoor.poison_rate 0.05).
// When both a --config file and a flag set the same key, the file wins.

#include <CLI11.hpp>
#include <iostream>
#include <map>
#include <sstream>

#include "bcm/config.hpp"
#include "bcm/csv.hpp"
#include "bcm/errors.hpp"
#include "bcm/experiment.hpp"
#include "bcm/plot.hpp"
#include "bcm/sampling.hpp"

namespace {

// Config flags for one subcommand, resolved into an ExperimentConfig.
class ConfigFlags {
 public:
  void attach(CLI::App& app) {
    app.add_option("-c,--config", file_, "Experiment config (JSON); its values override flags");
    for (const auto& leaf : bcm::config_keys()) {
      app.add_option("--" + leaf, values_[leaf], "config key " + leaf);
    }
  }

  bcm::ExperimentConfig resolve() const {
    std::map<std::string, std::string> set;
    for (const auto& [key, text] : values_) {
      if (!text.empty()) set.emplace(key, text);
    }
    return bcm::resolve_config(set, file_);
  }

 private:
  std::string file_;
  std::map<std::string, std::string> values_;
};

std::vector<double> parse_rates(const std::string& text) {
  std::vector<double> rates;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      rates.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw bcm::InvalidInput("bad poison rate '" + item + "'");
    }
  }
  return rates;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backdoored consistency-model training and evaluation"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  auto* train = app.add_subcommand("train", "Train one run, writing checkpoints, grids and metrics per tick");
  train_flags.attach(*train);

  ConfigFlags sample_flags;
  std::string sample_ckpt;
  std::string sample_out = "samples";
  std::size_t sample_n = 64;
  std::uint64_t sample_seed = 0;
  auto* sample = app.add_subcommand("sample", "Write clean and triggered sample grids from a checkpoint");
  sample->add_option("--checkpoint", sample_ckpt, "Checkpoint file")->required();
  sample->add_option("--n", sample_n, "Number of samples per grid");
  sample->add_option("--seed", sample_seed, "Noise seed");
  sample->add_option("--out", sample_out, "Output directory");
  sample_flags.attach(*sample);

  ConfigFlags eval_flags;
  std::string eval_ckpt;
  auto* eval = app.add_subcommand("eval", "Print FID/MSE for a checkpoint as a CSV row");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_flags.attach(*eval);

  ConfigFlags sweep_flags;
  std::string sweep_rates = "0,0.05,0.1,0.2";
  auto* sweep = app.add_subcommand("sweep", "One run per poison rate plus an aggregate CSV and plot");
  sweep->add_option("--rates", sweep_rates, "Comma-separated poison rates");
  sweep_flags.attach(*sweep);

  std::string plot_csv;
  std::string plot_kind;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot", "Render an SVG from a sweep CSV or training log");
  plot->add_option("csv", plot_csv, "Input CSV")->required();
  plot->add_option("--kind", plot_kind, "fid_mse_vs_rate or loss_curves")->required();
  plot->add_option("--out", plot_out, "Output SVG (default: next to the CSV)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto result = bcm::run_experiment(train_flags.resolve(), &std::cout);
      std::cout << "run directory: " << result.dir.string() << '\n';
    } else if (*sample) {
      const auto cfg = sample_flags.resolve();
      const auto ckpt = bcm::load_checkpoint(sample_ckpt);
      const auto shape = ckpt.params.backbone.shape;
      const auto backdoor = bcm::build_backdoor(cfg, shape);
      std::filesystem::create_directories(sample_out);
      const char* ext = shape.channels == 1 ? ".pgm" : ".ppm";
      const std::vector<std::string> comments = {"config_hash=" + ckpt.config_hash};
      bcm::Rng clean_rng(sample_seed);
      bcm::write_grid(std::filesystem::path(sample_out) / (std::string("clean") + ext),
                      bcm::sample_clean(ckpt.params, clean_rng, sample_n, ckpt.schedule), comments);
      bcm::Rng backdoor_rng(sample_seed);
      bcm::write_grid(std::filesystem::path(sample_out) / (std::string("backdoor") + ext),
                      bcm::sample_backdoor(ckpt.params, backdoor.trigger, backdoor_rng, sample_n, ckpt.schedule),
                      comments);
      std::cout << "wrote grids to " << sample_out << '\n';
    } else if (*eval) {
      const auto cfg = eval_flags.resolve();
      const auto ckpt = bcm::load_checkpoint(eval_ckpt);
      const auto data = bcm::build_dataset(cfg);
      const auto backdoor = bcm::build_backdoor(cfg, data.shape);
      const auto extractor = bcm::make_extractor(cfg.eval.extractor);
      const auto reference = bcm::feature_stats(*extractor, data.images);
      const auto m = bcm::evaluate(ckpt.params, cfg, backdoor, reference, *extractor);
      std::cout << "iteration,rho,fid,mse,n_fid,n_mse,extractor_id,config_hash\n"
                << ckpt.iteration << ',' << bcm::format_number(cfg.backdoor.poison_rate) << ','
                << bcm::format_number(m.fid) << ',' << bcm::format_number(m.mse) << ',' << m.n_fid_samples << ','
                << m.n_mse_samples << ',' << m.extractor_id << ',' << ckpt.config_hash << '\n';
    } else if (*sweep) {
      const auto result = bcm::sweep_poison_rate(sweep_flags.resolve(), parse_rates(sweep_rates), &std::cout);
      std::cout << "sweep directory: " << result.dir.string() << '\n';
    } else if (*plot) {
      const auto out = bcm::render_plot(plot_csv, bcm::parse_plot_kind(plot_kind), plot_out);
      std::cout << "wrote " << out.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

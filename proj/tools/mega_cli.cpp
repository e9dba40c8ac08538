// Command-line runner. Exit codes: 0 ok, 1 usage, 2 data, 3 numeric.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mega/autodiff.hpp"
#include "mega/commands.hpp"
#include "mega/error.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Common {
  std::optional<std::string> config_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("-c,--config", common.config_file, "config file of key = value lines");
  cmd->add_option("--set", common.overrides, "override a config key (key=value)")
      ->type_name("KEY=VALUE");
}

mega::RunConfig resolve(const Common& common) {
  mega::RunConfig config = common.config_file
                               ? mega::load_config(*common.config_file)
                               : mega::default_config();
  std::string text;
  for (const auto& kv : common.overrides) {
    if (kv.find('=') == std::string::npos)
      throw mega::ConfigError("--set expects key=value, got '" + kv + "'");
    text += kv + "\n";
  }
  return mega::parse_config(text, config);
}

std::optional<mega::OpKind> op_by_name(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(mega::OpKind::Scale); ++k) {
    const auto kind = static_cast<mega::OpKind>(k);
    if (mega::op_name(kind) == name) return kind;
  }
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive graph encoder training with a learned edge-reweighting augmenter"};
  app.require_subcommand(1);

  Common common;
  std::optional<std::filesystem::path> params;
  std::optional<std::filesystem::path> out;
  std::vector<double> lambdas = {0.0, 0.1, 1.0};
  std::string fault;

  auto* train = app.add_subcommand("train", "train a model and write metrics.jsonl and params.bin");
  add_common(train, common);

  auto* eval = app.add_subcommand("eval", "linear-probe accuracy over seeded splits");
  add_common(eval, common);
  eval->add_option("-p,--params", params, "trained parameter file; omit to train per run");
  eval->add_option("-o,--out", out, "result JSON path");

  auto* sweep = app.add_subcommand("sweep-lambda", "full protocol per lambda value, CSV output");
  add_common(sweep, common);
  sweep->add_option("--values", lambdas, "lambda values")->delimiter(',');
  sweep->add_option("-o,--out", out, "CSV path");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks of every backward rule");
  gradcheck->add_option("--inject-fault", fault)->group("");

  std::filesystem::path heatmap_out;
  auto* heatmap = app.add_subcommand("heatmap", "PPM image of graph embeddings sorted by class");
  add_common(heatmap, common);
  heatmap->add_option("-p,--params", params, "trained parameter file")->required();
  heatmap->add_option("-o,--out", heatmap_out, "output .ppm path")->required();

  auto* inspect = app.add_subcommand("inspect-dataset", "graph, class and feature counts");
  add_common(inspect, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*gradcheck) {
      if (!fault.empty()) {
        const auto kind = op_by_name(fault);
        if (!kind) throw mega::ConfigError("unknown primitive '" + fault + "'");
        mega::debug::set_backward_fault(*kind);
      }
      return mega::cmd_gradcheck(std::cout).passed() ? kOk : kNumeric;
    }
    const mega::RunConfig config = resolve(common);
    if (*train) {
      mega::cmd_train(config, std::cout);
    } else if (*eval) {
      mega::cmd_eval(config, params, out, std::cout);
    } else if (*sweep) {
      mega::cmd_sweep_lambda(config, lambdas, out, std::cout);
    } else if (*heatmap) {
      mega::cmd_heatmap(config, *params, heatmap_out, std::cout);
    } else if (*inspect) {
      mega::cmd_inspect_dataset(config, std::cout);
    }
    return kOk;
  } catch (const mega::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const mega::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const mega::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  }
}

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "fedkd/config.hpp"
#include "fedkd/runner.hpp"

namespace {

struct Args {
  std::string config_path;
  std::string out_dir = "runs";
  std::optional<std::string> method_override;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> export_dir;
  bool dry_run = false;
  bool help = false;
};

void print_usage() {
  std::cout << "Usage: fedkd [options]\n"
            << "Options:\n"
            << "  --config PATH       experiment config file (key = value lines)\n"
            << "  --out DIR           output directory for CSV/JSON (default: runs)\n"
            << "  --method NAME       run a single method, overriding the config\n"
            << "  --seed N            override seed_train\n"
            << "  --export-data DIR   write the generated datasets/partitions and exit\n"
            << "  --dry-run           validate the config and print resolved values\n"
            << "  --help              show this message\n";
}

std::optional<Args> parse_args(int argc, char** argv) {
  Args args;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    auto value = [&]() -> std::optional<std::string> {
      if (i + 1 >= argc) {
        std::cerr << "missing value for " << arg << "\n";
        return std::nullopt;
      }
      return std::string(argv[++i]);
    };
    if (arg == "--config") {
      auto v = value();
      if (!v) return std::nullopt;
      args.config_path = *v;
    } else if (arg == "--out") {
      auto v = value();
      if (!v) return std::nullopt;
      args.out_dir = *v;
    } else if (arg == "--method") {
      auto v = value();
      if (!v) return std::nullopt;
      args.method_override = *v;
    } else if (arg == "--seed") {
      auto v = value();
      if (!v) return std::nullopt;
      args.seed_override = std::stoull(*v);
    } else if (arg == "--export-data") {
      auto v = value();
      if (!v) return std::nullopt;
      args.export_dir = *v;
    } else if (arg == "--dry-run") {
      args.dry_run = true;
    } else if (arg == "--help" || arg == "-h") {
      args.help = true;
    } else {
      std::cerr << "unknown argument: " << arg << "\n";
      return std::nullopt;
    }
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  const auto args = parse_args(argc, argv);
  if (!args || args->help) {
    print_usage();
    return args && args->help ? 0 : 2;
  }

  try {
    fedkd::ExperimentConfig cfg;
    if (!args->config_path.empty()) {
      cfg = fedkd::load_config(args->config_path);
    }
    if (args->method_override) {
      cfg.methods = {fedkd::method_from_string(*args->method_override)};
    }
    if (args->seed_override) {
      cfg.seed_train = *args->seed_override;
    }
    cfg.validate();

    if (args->dry_run) {
      std::cout << fedkd::save_config(cfg);
      return 0;
    }
    if (args->export_dir) {
      fedkd::export_world(cfg, *args->export_dir);
      std::cout << "exported dataset and partitions to " << *args->export_dir << "\n";
      return 0;
    }

    const auto artifacts = fedkd::run_sweep(cfg, args->out_dir);
    for (const auto& art : artifacts) {
      const auto& last = art.result.records.back();
      std::cout << fedkd::method_to_string(art.method) << " seed " << art.seed_index
                << ": target acc " << last.target_test_accuracy << ", aux acc "
                << last.aux_test_accuracy << " -> " << art.csv_path << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

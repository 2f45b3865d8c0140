// Command-line front end: one subcommand per experiment plus `reproduce`.

#include <unistd.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "gaah/lapack.hpp"
#include "gaah/run.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::string> out;
  std::vector<double> orders;
};

void add_common_flags(CLI::App* cmd, Overrides& o, bool with_config) {
  if (with_config) cmd->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed for the phase draws");
  cmd->add_option("--workers", o.workers, "worker threads (default: all cores)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--q", o.orders, "participation-entropy orders, e.g. --q 1 2");
}

void apply(const Overrides& o, gaah::RunConfig& c) {
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.out) c.out = *o.out;
  if (!o.orders.empty()) c.orders = o.orders;
}

void run_one(const gaah::RunConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string name = c.label.empty() ? c.experiment : c.label;
  std::fprintf(stderr, "[%s] running %s\n", name.c_str(), c.experiment.c_str());
  const auto res = gaah::run(c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string files;
  for (const auto& f : res.files) files += " " + f.string();
  std::fprintf(stderr, "[%s] done in %.1f s:%s\n", name.c_str(), secs, files.c_str());
}

// Some OpenBLAS builds select a faulty kernel on recent CPUs. The core type
// is read when the library loads, so the only remedy is to restart the
// process with an explicit choice.
void ensure_dense_driver(char** argv) {
  if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return;
  if (gaah::lapack::dense_driver_healthy()) return;
  setenv("OPENBLAS_CORETYPE", "Haswell", 1);
  execv("/proc/self/exe", argv);
  std::fprintf(stderr, "warning: dense LAPACK driver failed its self-check; using the slower fallback\n");
}

}  // namespace

int main(int argc, char** argv) {
  ensure_dense_driver(argv);
  gaah::lapack::pin_blas_threads();

  CLI::App app{"Quasi-periodic hard-core boson chain simulator"};
  app.set_version_flag("--version", GAAH_VERSION);
  app.require_subcommand(1);

  Overrides o;
  for (const auto& kind : gaah::experiment_kinds()) {
    auto* cmd = app.add_subcommand(kind, "run the " + kind + " experiment");
    add_common_flags(cmd, o, true);
  }
  std::string preset_name;
  bool full = false;
  auto* reproduce = app.add_subcommand("reproduce", "run a named figure preset");
  reproduce->add_option("preset", preset_name, "preset name")->required();
  reproduce->add_flag("--full", full, "use the published sample sizes (hours)");
  add_common_flags(reproduce, o, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (reproduce->parsed()) {
      for (auto c : gaah::preset(preset_name, full)) {
        apply(o, c);
        run_one(c);
      }
      return 0;
    }
    const std::string kind = app.get_subcommands().front()->get_name();
    gaah::RunConfig c;
    c.experiment = kind;
    if (!o.config.empty()) {
      c = gaah::load_config(o.config, c);
      if (c.experiment != kind)
        throw gaah::ConfigError("experiment", "config file asks for '" + c.experiment + "' but the subcommand is '" +
                                                  kind + "'");
    }
    apply(o, c);
    run_one(c);
    return 0;
  } catch (const gaah::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const gaah::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}

// Benchmark: runs the same experiment through the serial reference path and
// the OpenMP-parallel path, reports wall times, and verifies that both produce
// byte-identical plot data (the parallel path must be a pure speedup).
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>

#include "matchinf/config.hpp"
#include "matchinf/simulation.hpp"

int main(int argc, char** argv) {
    using namespace matchinf;
    std::string id = "fig1";
    int replications = 60;
    if (argc > 1) id = argv[1];
    if (argc > 2) replications = std::atoi(argv[2]);

    ExperimentConfig config = experiment_preset(id, "desk");
    config.replications = replications;
    config.report_path.clear();
    config.plot_path.clear();

    std::cout << "benchmark experiment=" << id << " replications=" << replications
              << " sizes=" << config.sizes.size() << "\n";

    const auto t0 = std::chrono::steady_clock::now();
    const SimulationReport serial = run_experiment(config, false);
    const auto t1 = std::chrono::steady_clock::now();
    const SimulationReport parallel = run_experiment(config, true);
    const auto t2 = std::chrono::steady_clock::now();

    const double serial_s = std::chrono::duration<double>(t1 - t0).count();
    const double parallel_s = std::chrono::duration<double>(t2 - t1).count();
    std::cout << "serial_s=" << serial_s << " parallel_s=" << parallel_s
              << " threads=" << parallel.threads_used << " speedup=" << serial_s / parallel_s << "\n";

    if (plot_csv_text(serial) != plot_csv_text(parallel)) {
        std::cerr << "FAIL: parallel output differs from the serial reference\n";
        return 1;
    }
    std::cout << "outputs identical: yes\n";
    return 0;
}

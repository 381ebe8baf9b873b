#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "koopsplit/config.hpp"
#include "koopsplit/monitor.hpp"

namespace koopsplit {

struct SweepSpec {
    MonitoringConfig base;
    SweepAxes axes;

    static SweepSpec from_config(const ExperimentConfig& cfg);
    std::size_t run_count() const;
};

struct SweepRow {
    int q = 0;
    double power_watts = 0.0;
    double period_s = 0.0;
    int seed = 0;
    double rmse = 0.0;
    double rmse_db = 0.0;
    int epochs = 0;
    double wall_s = 0.0;
    std::string error;  // empty on success; not part of sweep.csv

    bool ok() const { return error.empty(); }
    bool operator==(const SweepRow&) const = default;
};

struct CellSummary {
    int q = 0;
    double power_watts = 0.0;
    double period_s = 0.0;
    int runs = 0;
    int failures = 0;
    double rmse_mean = 0.0;
    double rmse_std = 0.0;
    double rmse_db_mean = 0.0;
    double rmse_db_std = 0.0;
    double epochs_mean = 0.0;
};

struct SweepTable {
    std::vector<SweepRow> rows;

    // One entry per (q, P, T_P1) cell over its successful runs, in row order.
    std::vector<CellSummary> summary() const;
    bool operator==(const SweepTable&) const = default;
};

struct SweepOutcome {
    SweepTable table;
    std::vector<std::optional<MonitoringResult>> results;  // parallel to table.rows
};

// Seed of one run. Depends only on (master seed, seed index): runs that differ only in
// q, P or T_P1 share weight initialization, shuffling and standard-normal channel draws.
std::uint64_t run_seed(std::uint64_t master, int seed_index);

MonitoringConfig cell_config(const SweepSpec& spec, int q, double power, double period, int seed_index);

// Rows ordered by (q, P, T_P1, seed) as listed in the axes, independent of scheduling.
// A failed run becomes an error row; the sweep continues.
SweepOutcome run_sweep(const SweepSpec& spec,
                       const std::function<void(const SweepRow&)>& on_row_done = {});

inline constexpr const char* kSweepCsvHeader = "q,power_watts,period_s,seed,rmse,rmse_db,epochs,wall_s";

void write_sweep_csv(std::ostream& os, const SweepTable& table);
SweepTable read_sweep_csv(std::istream& is);
void write_summary_csv(std::ostream& os, const SweepTable& table);

std::string result_to_json(const MonitoringResult& result);

// Writes `result.json`, `history.jsonl`, `trajectory.csv` (truth + predicted) and
// `model.ksck` into `dir`.
void emit_run(const MonitoringResult& result, const std::filesystem::path& dir);

// Writes `sweep.csv`, `summary.csv`, `errors.log` (failed runs only, if any) and one
// emit_run() directory per successful run under `runs/`.
void emit_outputs(const SweepOutcome& outcome, const std::filesystem::path& out_dir);

std::string run_directory_name(const SweepRow& row);

// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body);

}  // namespace koopsplit

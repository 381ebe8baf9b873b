#include "koopsplit/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "koopsplit/checkpoint.hpp"
#include "koopsplit/errors.hpp"

namespace koopsplit {

SweepSpec SweepSpec::from_config(const ExperimentConfig& cfg) {
    validate(cfg);
    return {cfg.monitoring, cfg.sweep};
}

std::size_t SweepSpec::run_count() const {
    return axes.latent_dims.size() * axes.powers.size() * axes.periods.size() * axes.seeds.size();
}

std::uint64_t run_seed(std::uint64_t master, int seed_index) {
    return combine_seeds(master, static_cast<std::uint64_t>(seed_index));
}

MonitoringConfig cell_config(const SweepSpec& spec, int q, double power, double period, int seed_index) {
    MonitoringConfig cfg = spec.base;
    cfg.model.latent_dim = q;
    cfg.channel.tx_power = power;
    cfg.phase1_duration = period;
    cfg.seed = run_seed(spec.base.seed, seed_index);
    return cfg;
}

SweepOutcome run_sweep(const SweepSpec& spec, const std::function<void(const SweepRow&)>& on_row_done) {
    validate(ExperimentConfig{spec.base, spec.axes});

    SweepOutcome out;
    for (int q : spec.axes.latent_dims)
        for (double p : spec.axes.powers)
            for (double t : spec.axes.periods)
                for (int s : spec.axes.seeds) {
                    SweepRow row;
                    row.q = q;
                    row.power_watts = p;
                    row.period_s = t;
                    row.seed = s;
                    out.table.rows.push_back(row);
                }
    out.results.resize(out.table.rows.size());

    unsigned workers = spec.axes.workers > 0 ? static_cast<unsigned>(spec.axes.workers)
                                             : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(out.table.rows.size()));

    std::atomic<std::size_t> next{0};
    std::mutex report_mutex;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < out.table.rows.size(); i = next.fetch_add(1)) {
            SweepRow& row = out.table.rows[i];
            try {
                MonitoringResult res = run_monitoring(cell_config(spec, row.q, row.power_watts, row.period_s, row.seed));
                row.rmse = res.rmse.rmse;
                row.rmse_db = res.rmse.rmse_db;
                row.epochs = static_cast<int>(res.history.size());
                row.wall_s = res.wall_s;
                out.results[i] = std::move(res);
            } catch (const std::exception& e) {
                row.rmse = std::numeric_limits<double>::quiet_NaN();
                row.rmse_db = std::numeric_limits<double>::quiet_NaN();
                row.error = e.what();
            }
            if (on_row_done) {
                std::lock_guard lock(report_mutex);
                on_row_done(row);
            }
        }
    };

    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return out;
}

std::vector<CellSummary> SweepTable::summary() const {
    std::vector<CellSummary> cells;
    auto find = [&cells](const SweepRow& r) -> CellSummary& {
        for (auto& c : cells)
            if (c.q == r.q && c.power_watts == r.power_watts && c.period_s == r.period_s) return c;
        CellSummary c;
        c.q = r.q;
        c.power_watts = r.power_watts;
        c.period_s = r.period_s;
        cells.push_back(c);
        return cells.back();
    };
    std::vector<std::vector<const SweepRow*>> members;
    for (const auto& r : rows) {
        CellSummary& c = find(r);
        const auto idx = static_cast<std::size_t>(&c - cells.data());
        if (members.size() <= idx) members.resize(idx + 1);
        if (r.ok()) members[idx].push_back(&r);
        else ++c.failures;
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        auto& c = cells[i];
        const auto& m = i < members.size() ? members[i] : std::vector<const SweepRow*>{};
        c.runs = static_cast<int>(m.size());
        if (m.empty()) {
            c.rmse_mean = c.rmse_std = c.rmse_db_mean = c.rmse_db_std = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        auto stats = [&m](auto field) {
            double mean = 0.0;
            for (const auto* r : m) mean += field(*r);
            mean /= static_cast<double>(m.size());
            double var = 0.0;
            for (const auto* r : m) var += (field(*r) - mean) * (field(*r) - mean);
            const double sd = m.size() > 1 ? std::sqrt(var / static_cast<double>(m.size() - 1)) : 0.0;
            return std::pair{mean, sd};
        };
        std::tie(c.rmse_mean, c.rmse_std) = stats([](const SweepRow& r) { return r.rmse; });
        std::tie(c.rmse_db_mean, c.rmse_db_std) = stats([](const SweepRow& r) { return r.rmse_db; });
        c.epochs_mean = stats([](const SweepRow& r) { return static_cast<double>(r.epochs); }).first;
    }
    return cells;
}

namespace {

std::string num(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

double parse_num(const std::string& s) {
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::runtime_error("sweep CSV: bad number '" + s + "'");
    return v;
}

}  // namespace

void write_sweep_csv(std::ostream& os, const SweepTable& table) {
    os << kSweepCsvHeader << '\n';
    for (const auto& r : table.rows)
        os << r.q << ',' << num(r.power_watts) << ',' << num(r.period_s) << ',' << r.seed << ','
           << num(r.rmse) << ',' << num(r.rmse_db) << ',' << r.epochs << ',' << num(r.wall_s) << '\n';
}

SweepTable read_sweep_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kSweepCsvHeader)
        throw std::runtime_error("sweep CSV: unexpected header");
    SweepTable table;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) throw std::runtime_error("sweep CSV: expected 8 columns");
        SweepRow r;
        r.q = std::stoi(cells[0]);
        r.power_watts = parse_num(cells[1]);
        r.period_s = parse_num(cells[2]);
        r.seed = std::stoi(cells[3]);
        r.rmse = parse_num(cells[4]);
        r.rmse_db = parse_num(cells[5]);
        r.epochs = std::stoi(cells[6]);
        r.wall_s = parse_num(cells[7]);
        table.rows.push_back(r);
    }
    return table;
}

void write_summary_csv(std::ostream& os, const SweepTable& table) {
    os << "q,power_watts,period_s,runs,failures,rmse_mean,rmse_std,rmse_db_mean,rmse_db_std,epochs_mean\n";
    for (const auto& c : table.summary())
        os << c.q << ',' << num(c.power_watts) << ',' << num(c.period_s) << ',' << c.runs << ','
           << c.failures << ',' << num(c.rmse_mean) << ',' << num(c.rmse_std) << ','
           << num(c.rmse_db_mean) << ',' << num(c.rmse_db_std) << ',' << num(c.epochs_mean) << '\n';
}

std::string result_to_json(const MonitoringResult& r) {
    using nlohmann::json;
    auto finite_or_null = [](double v) -> json { return std::isfinite(v) ? json(v) : json(nullptr); };

    json cfg;
    for (const auto& [k, v] : [&] {
             std::vector<std::pair<std::string, std::string>> kv;
             std::istringstream ss(dump_config(ExperimentConfig{r.config, {}}));
             std::string line;
             while (std::getline(ss, line)) {
                 const auto eq = line.find(" = ");
                 if (eq == std::string::npos || line.rfind("sweep_", 0) == 0 || line.rfind("workers", 0) == 0) continue;
                 kv.emplace_back(line.substr(0, eq), line.substr(eq + 3));
             }
             return kv;
         }())
        cfg[k] = v;

    json hist = json::array();
    for (const auto& e : r.history.epochs)
        hist.push_back({{"epoch", e.epoch},
                        {"loss_total", e.train.overall},
                        {"loss_reconst", e.train.reconstruction},
                        {"loss_linear", e.train.linearity},
                        {"loss_pred", e.train.prediction},
                        {"val_loss", e.validation.overall},
                        {"wall_s", e.wall_s}});

    json spectrum = json::array();
    for (const auto& l : koopman_spectrum(r.model)) spectrum.push_back({l.real(), l.imag()});

    json j;
    j["config"] = cfg;
    j["history"] = hist;
    j["early_stopped"] = r.history.early_stopped;
    j["best_epoch"] = r.history.best_epoch;
    j["rmse"] = r.rmse.rmse;
    j["rmse_db"] = finite_or_null(r.rmse.rmse_db);
    j["rmse_per_dim"] = std::vector<double>(r.rmse.per_dim.data(), r.rmse.per_dim.data() + r.rmse.per_dim.size());
    j["phase2_steps"] = r.predicted.size();
    j["phase2_transmissions"] = r.phase2_transmissions;
    j["phase1_transmissions"] = r.history.uplink_transmissions;
    j["koopman_spectrum"] = spectrum;
    j["wall_s"] = r.wall_s;
    return j.dump(2);
}

void write_file_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + tmp.string());
        body(os);
        if (!os) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void emit_run(const MonitoringResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "result.json", [&](std::ostream& os) { os << result_to_json(result) << '\n'; });
    write_file_atomic(dir / "history.jsonl", [&](std::ostream& os) { write_history_jsonl(os, result.history); });
    write_file_atomic(dir / "trajectory.csv",
                      [&](std::ostream& os) { write_comparison_csv(os, result.truth, result.predicted); });
    save_checkpoint(dir / "model.ksck", result.model);
}

std::string run_directory_name(const SweepRow& row) {
    std::ostringstream ss;
    ss << "q" << row.q << "_p" << row.power_watts << "_t" << row.period_s << "_s" << row.seed;
    return ss.str();
}

void emit_outputs(const SweepOutcome& outcome, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_file_atomic(out_dir / "sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, outcome.table); });
    write_file_atomic(out_dir / "summary.csv", [&](std::ostream& os) { write_summary_csv(os, outcome.table); });

    const bool any_error = std::any_of(outcome.table.rows.begin(), outcome.table.rows.end(),
                                       [](const SweepRow& r) { return !r.ok(); });
    if (any_error)
        write_file_atomic(out_dir / "errors.log", [&](std::ostream& os) {
            for (const auto& r : outcome.table.rows)
                if (!r.ok()) os << run_directory_name(r) << ": " << r.error << '\n';
        });

    for (std::size_t i = 0; i < outcome.table.rows.size(); ++i)
        if (i < outcome.results.size() && outcome.results[i])
            emit_run(*outcome.results[i], out_dir / "runs" / run_directory_name(outcome.table.rows[i]));
}

}  // namespace koopsplit

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace esrkit {

// Challenge-style efficiency scoring. Each metric maps to
// exp(2 * value / baseline), so the baseline entry lands at e^2 (7.39) for
// every sub-track; lower is better throughout. The final score blends the
// sub-scores 0.7 / 0.15 / 0.15 (runtime / flops / params). Entries qualify
// for ranking only if both PSNR figures clear the fidelity thresholds.

struct MetricRecord {
    std::string team;
    double psnr_val = 0.0, psnr_test = 0.0;
    double runtime_val_ms = 0.0, runtime_test_ms = 0.0;
    double params_m = 0.0;  // millions of parameters
    double flops_g = 0.0;   // GFLOPs at the reference input size

    double runtime_avg_ms() const { return 0.5 * (runtime_val_ms + runtime_test_ms); }
};

struct Baseline {
    double runtime_ms = 22.183;
    double params_m = 0.276;
    double flops_g = 16.70;
    double psnr_val_min = 26.90;
    double psnr_test_min = 26.99;
};

struct ScoreRow {
    MetricRecord record;
    double s_runtime = 0.0, s_params = 0.0, s_flops = 0.0, s_final = 0.0;
    bool eligible = false;
    bool is_baseline = false;
    // 0 = unranked. Main rank is dense over eligible entries (ties broken
    // by runtime score, then team name); sub-track ranks use competition
    // ranking (ties share the smallest rank, the next value skips ahead).
    int rank = 0;
    int rank_runtime = 0, rank_params = 0, rank_flops = 0;
};

double metric_score(double value, double baseline);

double final_score(double s_runtime, double s_flops, double s_params, double w_runtime = 0.7,
                   double w_flops = 0.15, double w_params = 0.15);

// Scores every record and ranks the eligible ones. A record whose team
// matches `baseline_team` is scored but stays outside the ranking (it is
// the reference row, not a contestant). Returned rows are ordered: ranked
// entries ascending, then ineligible entries, then the baseline row.
std::vector<ScoreRow> rank(const std::vector<MetricRecord>& records, const Baseline& b = {},
                           const std::string& baseline_team = "Baseline");

// Fixed two decimals below 1000, three-significant-digit scientific
// notation (e.g. "9.02e3") at or above.
std::string format_score(double s);

// CSV with header
// team,psnr_val,psnr_test,runtime_val_ms,runtime_test_ms,params_M,flops_G
std::vector<MetricRecord> load_metric_csv(std::istream& in);
std::vector<MetricRecord> load_metric_csv_file(const std::string& path);

}  // namespace esrkit

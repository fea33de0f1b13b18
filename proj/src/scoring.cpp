#include "esrkit/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "esrkit/tensor.hpp"  // require/fail

namespace esrkit {

double metric_score(double value, double baseline) {
    require(std::isfinite(value) && value > 0.0,
            "metric_score: value must be positive and finite, got " + std::to_string(value));
    require(std::isfinite(baseline) && baseline > 0.0,
            "metric_score: baseline must be positive and finite, got " +
                std::to_string(baseline));
    return std::exp(2.0 * value / baseline);
}

double final_score(double s_runtime, double s_flops, double s_params, double w_runtime,
                   double w_flops, double w_params) {
    return w_runtime * s_runtime + w_flops * s_flops + w_params * s_params;
}

namespace {

// Competition ("1224") ranks over `values` ascending: ties share the
// smallest rank and the next distinct value skips the shared slots.
std::vector<int> competition_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<int> ranks(n, 0);
    for (std::size_t pos = 0; pos < n; ++pos) {
        if (pos > 0 && values[order[pos]] == values[order[pos - 1]])
            ranks[order[pos]] = ranks[order[pos - 1]];
        else
            ranks[order[pos]] = int(pos) + 1;
    }
    return ranks;
}

}  // namespace

std::vector<ScoreRow> rank(const std::vector<MetricRecord>& records, const Baseline& b,
                           const std::string& baseline_team) {
    std::set<std::string> names;
    for (const auto& r : records)
        require(names.insert(r.team).second, "rank: duplicate team name '" + r.team + "'");

    std::vector<ScoreRow> rows;
    rows.reserve(records.size());
    for (const auto& r : records) {
        ScoreRow row;
        row.record = r;
        row.is_baseline = r.team == baseline_team;
        row.s_runtime = metric_score(r.runtime_avg_ms(), b.runtime_ms);
        row.s_params = metric_score(r.params_m, b.params_m);
        row.s_flops = metric_score(r.flops_g, b.flops_g);
        row.s_final = final_score(row.s_runtime, row.s_flops, row.s_params);
        row.eligible = !row.is_baseline && r.psnr_val >= b.psnr_val_min &&
                       r.psnr_test >= b.psnr_test_min;
        rows.push_back(std::move(row));
    }

    // Main ranking: dense 1..K over eligible rows.
    std::vector<std::size_t> elig;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].eligible) elig.push_back(i);
    std::sort(elig.begin(), elig.end(), [&](std::size_t a, std::size_t b2) {
        if (rows[a].s_final != rows[b2].s_final) return rows[a].s_final < rows[b2].s_final;
        if (rows[a].s_runtime != rows[b2].s_runtime)
            return rows[a].s_runtime < rows[b2].s_runtime;
        return rows[a].record.team < rows[b2].record.team;
    });
    for (std::size_t pos = 0; pos < elig.size(); ++pos) rows[elig[pos]].rank = int(pos) + 1;

    // Sub-track ranks over the same eligible set.
    std::vector<double> rt, pm, fl;
    for (std::size_t i : elig) {
        rt.push_back(rows[i].record.runtime_avg_ms());
        pm.push_back(rows[i].record.params_m);
        fl.push_back(rows[i].record.flops_g);
    }
    const auto rrt = competition_ranks(rt);
    const auto rpm = competition_ranks(pm);
    const auto rfl = competition_ranks(fl);
    for (std::size_t k = 0; k < elig.size(); ++k) {
        rows[elig[k]].rank_runtime = rrt[k];
        rows[elig[k]].rank_params = rpm[k];
        rows[elig[k]].rank_flops = rfl[k];
    }

    // Presentation order: ranked ascending, ineligible, baseline last.
    std::vector<ScoreRow> out;
    out.reserve(rows.size());
    for (std::size_t pos = 0; pos < elig.size(); ++pos) out.push_back(rows[elig[pos]]);
    for (const auto& row : rows)
        if (!row.eligible && !row.is_baseline) out.push_back(row);
    for (const auto& row : rows)
        if (row.is_baseline) out.push_back(row);
    return out;
}

std::string format_score(double s) {
    std::ostringstream os;
    if (!std::isfinite(s)) {
        os << s;
        return os.str();
    }
    if (std::abs(s) < 1000.0) {
        os.setf(std::ios::fixed);
        os.precision(2);
        os << s;
        return os.str();
    }
    int e = int(std::floor(std::log10(std::abs(s))));
    double m = s / std::pow(10.0, e);
    // Rounding the mantissa to two decimals can carry it to 10.00.
    if (std::abs(m) >= 9.995) {
        m /= 10.0;
        ++e;
    }
    os.setf(std::ios::fixed);
    os.precision(2);
    os << m << "e" << e;
    return os.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_num(const std::string& s, int lineno, const char* col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        require(pos == s.size(), "");
        return v;
    } catch (...) {
        fail("metrics csv line " + std::to_string(lineno) + ": column '" + col +
             "' is not a number: '" + s + "'");
    }
}

}  // namespace

std::vector<MetricRecord> load_metric_csv(std::istream& in) {
    static const char* kHeader =
        "team,psnr_val,psnr_test,runtime_val_ms,runtime_test_ms,params_M,flops_G";
    std::string line;
    require(bool(std::getline(in, line)), "metrics csv: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == kHeader, "metrics csv: header must be exactly '" + std::string(kHeader) +
                                 "', got '" + line + "'");

    std::vector<MetricRecord> records;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cols = split_csv_line(line);
        require(cols.size() == 7, "metrics csv line " + std::to_string(lineno) + ": expected 7 " +
                                      "columns, got " + std::to_string(cols.size()));
        MetricRecord r;
        r.team = cols[0];
        require(!r.team.empty(),
                "metrics csv line " + std::to_string(lineno) + ": empty team name");
        r.psnr_val = parse_num(cols[1], lineno, "psnr_val");
        r.psnr_test = parse_num(cols[2], lineno, "psnr_test");
        r.runtime_val_ms = parse_num(cols[3], lineno, "runtime_val_ms");
        r.runtime_test_ms = parse_num(cols[4], lineno, "runtime_test_ms");
        r.params_m = parse_num(cols[5], lineno, "params_M");
        r.flops_g = parse_num(cols[6], lineno, "flops_G");
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<MetricRecord> load_metric_csv_file(const std::string& path) {
    std::ifstream in(path);
    require(bool(in), "metrics csv: cannot open '" + path + "'");
    return load_metric_csv(in);
}

}  // namespace esrkit

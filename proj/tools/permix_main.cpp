// Command-line front end: experiment sweeps and the verification suite.
// Every report embeds its configuration and the toolkit version, and a fixed
// seed yields byte-identical output regardless of run or thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "permix/compound.hpp"
#include "permix/errors.hpp"
#include "permix/families.hpp"
#include "permix/geometry.hpp"
#include "permix/matrix.hpp"
#include "permix/overlap.hpp"
#include "permix/parallel.hpp"
#include "permix/permanent.hpp"
#include "permix/rng.hpp"
#include "permix/spectrum.hpp"
#include "permix/version.hpp"

using nlohmann::ordered_json;
using namespace permix;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        if constexpr (std::is_same_v<T, double>)
            out += fmt17(xs[i]);
        else
            out += std::to_string(xs[i]);
    }
    return out;
}

// Flat flag container shared by all subcommands; only the flags a subcommand
// registers are ever read by it.
struct Options {
    std::string family = "gaussian";
    std::vector<double> theta;
    std::vector<long long> n;
    std::vector<long long> k;
    long long m = 0;
    std::vector<double> grid;
    std::uint64_t seed = 42;
    long long samples = 10000;
    std::string out;
    std::string format = "csv";
    std::string only;
    unsigned threads = 1;
    bool inject_overlap_perturbation = false;
};

// Accumulates a whole report in memory, then writes it in one pass so stdout
// and file output are identical byte streams.
class Report {
public:
    explicit Report(std::string command) : command_(std::move(command)) {
        config_.emplace_back("command", command_);
    }

    void config(const std::string& key, const std::string& value) {
        config_.emplace_back(key, value);
    }
    void header(std::vector<std::string> cols) { header_ = std::move(cols); }
    void row(const std::vector<std::string>& cells) {
        std::string line;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) line += ",";
            line += cells[i];
        }
        rows_.push_back(std::move(line));
    }

    std::string render_csv() const {
        std::string out = "# permix version=" + std::string(kVersion) + "\n";
        for (const auto& [key, value] : config_)
            out += "# " + key + "=" + value + "\n";
        std::string h;
        for (std::size_t i = 0; i < header_.size(); ++i) {
            if (i) h += ",";
            h += header_[i];
        }
        out += h + "\n";
        for (const auto& r : rows_) out += r + "\n";
        return out;
    }

    std::string render_json() const {
        ordered_json doc;
        doc["version"] = kVersion;
        ordered_json cfg;
        for (const auto& [key, value] : config_) cfg[key] = value;
        doc["config"] = cfg;
        ordered_json data = ordered_json::array();
        for (const auto& r : rows_) {
            ordered_json obj;
            std::size_t start = 0, col = 0;
            while (start <= r.size() && col < header_.size()) {
                const std::size_t comma = r.find(',', start);
                const std::size_t end = comma == std::string::npos ? r.size() : comma;
                obj[header_[col]] = r.substr(start, end - start);
                start = end + 1;
                ++col;
            }
            data.push_back(obj);
        }
        doc["data"] = data;
        return doc.dump(2) + "\n";
    }

    std::string render(const std::string& format) const {
        return format == "json" ? render_json() : render_csv();
    }

private:
    std::string command_;
    std::vector<std::pair<std::string, std::string>> config_;
    std::vector<std::string> header_;
    std::vector<std::string> rows_;
};

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw validation_error("cannot open output file: " + out_path);
    f << text;
}

void check_format(const std::string& format) {
    if (format != "csv" && format != "json")
        throw validation_error("format must be csv or json");
}

// Builds the member list selected by --family/--theta (plus --m, --n, --seed
// for the synthetic discrete families).
std::vector<Member> build_members(const Options& opt) {
    if (opt.family == "gaussian" || opt.family == "poisson" || opt.family == "scale") {
        if (opt.theta.empty())
            throw validation_error("--theta must list one parameter per member");
        std::vector<Member> out;
        out.reserve(opt.theta.size());
        for (double t : opt.theta) {
            if (opt.family == "gaussian")
                out.push_back(Member::gaussian_loc(t));
            else if (opt.family == "poisson")
                out.push_back(Member::poisson(t));
            else
                out.push_back(Member::gaussian_scale(t));
        }
        return out;
    }
    if (opt.family == "shared-atom") {
        if (opt.m < 2) throw validation_error("shared-atom needs --m >= 2 categories");
        if (opt.theta.size() != 1)
            throw validation_error("shared-atom takes a single --theta (the shared mass)");
        return shared_atom_members(static_cast<std::size_t>(opt.m), opt.theta[0]);
    }
    if (opt.family == "swap-pair") {
        if (opt.theta.size() != 1)
            throw validation_error("swap-pair takes a single --theta (the swapped mass)");
        return swap_pair_members(opt.theta[0]);
    }
    if (opt.family == "simplex") {
        if (opt.m < 1) throw validation_error("simplex needs --m >= 1 categories");
        if (opt.theta.size() != 1)
            throw validation_error("simplex takes a single --theta (the smoothing mass)");
        if (opt.n.size() != 1 || opt.n[0] < 1)
            throw validation_error("simplex needs --n (the grid size)");
        return simplex_grid_members(static_cast<std::size_t>(opt.m), opt.theta[0],
                                    static_cast<std::size_t>(opt.n[0]), opt.seed);
    }
    throw validation_error("unknown family: " + opt.family);
}

void echo_family_config(Report& rep, const Options& opt) {
    rep.config("family", opt.family);
    if (!opt.theta.empty()) rep.config("theta", join(opt.theta));
    if (opt.m > 0) rep.config("m", std::to_string(opt.m));
    if (!opt.n.empty()) rep.config("n", join(opt.n));
    rep.config("seed", std::to_string(opt.seed));
}

// ---------------------------------------------------------------------------
// Plain subcommands
// ---------------------------------------------------------------------------

int cmd_overlap(const Options& opt) {
    check_format(opt.format);
    const std::vector<Member> members = build_members(opt);
    const OverlapMatrix a = build_overlap(members, {}, opt.threads);
    Report rep("overlap");
    echo_family_config(rep, opt);
    rep.config("format", opt.format);
    rep.config("row_sum_residual", fmt17(a.row_sum_residual));
    rep.config("has_zero_entries", a.has_zero_entries ? "1" : "0");
    rep.header({"i", "j", "a_ij"});
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            rep.row({std::to_string(i), std::to_string(j), fmt17(a.entries(i, j))});
    emit(rep.render(opt.format), opt.out);
    return 0;
}

int cmd_chi2(const Options& opt) {
    check_format(opt.format);
    const std::vector<Member> members = build_members(opt);
    const double chi2 = chi2_exact(members);
    Report rep("chi2");
    echo_family_config(rep, opt);
    rep.config("format", opt.format);
    rep.header({"n", "chi2", "log1p_chi2"});
    rep.row({std::to_string(members.size()), fmt17(chi2), fmt17(std::log1p(chi2))});
    emit(rep.render(opt.format), opt.out);
    return 0;
}

int cmd_bounds(const Options& opt) {
    check_format(opt.format);
    const std::vector<Member> members = build_members(opt);
    const OverlapMatrix a = build_overlap(members, {}, opt.threads);
    std::optional<double> chi2;
    if (members.size() <= 20) chi2 = chi2_exact(members);
    const BoundsReport b = bounds_report(a, chi2);
    Report rep("bounds");
    echo_family_config(rep, opt);
    rep.config("format", opt.format);
    rep.header({"n", "log_upper", "log_lower_spectral", "log_lower_diagonal",
                "log_exact"});
    rep.row({std::to_string(members.size()), fmt17(b.log_upper),
             fmt17(b.log_lower_spectral), fmt17(b.log_lower_diagonal),
             fmt17(b.log_exact ? *b.log_exact : kNan)});
    emit(rep.render(opt.format), opt.out);
    return 0;
}

bool family_is_ordered(const std::vector<Member>& members) {
    const ModelKind kind = members.front().kind();
    return kind == ModelKind::gaussian_loc || kind == ModelKind::poisson ||
           kind == ModelKind::gaussian_scale;
}

int cmd_diameter(const Options& opt) {
    check_format(opt.format);
    const std::vector<Member> members = build_members(opt);
    std::vector<long long> ks = opt.k;
    if (ks.empty()) ks.push_back(1);
    Report rep("diameter");
    echo_family_config(rep, opt);
    if (!opt.k.empty()) rep.config("k", join(opt.k));
    rep.config("format", opt.format);
    rep.header({"k", "diameter", "blocks"});
    const PartitionMethod method =
        family_is_ordered(members) ? PartitionMethod::dp1d : PartitionMethod::brute;
    for (long long k : ks) {
        if (k < 1) throw validation_error("--k must be >= 1");
        const Partition p =
            partition_diameter(members, static_cast<std::size_t>(k), method);
        std::string blocks;
        for (std::size_t i = 0; i < p.block_of.size(); ++i) {
            if (i) blocks += "|";
            blocks += std::to_string(p.block_of[i]);
        }
        rep.row({std::to_string(k), fmt17(p.diameter), blocks});
    }
    emit(rep.render(opt.format), opt.out);
    return 0;
}

int cmd_capacity(const Options& opt) {
    check_format(opt.format);
    const std::vector<Member> members = build_members(opt);
    const int iters = static_cast<int>(std::min<long long>(opt.samples, 100000));
    if (iters < 1) throw validation_error("--samples (ascent iterations) must be >= 1");
    const OverlapMatrix a = build_overlap(members, {}, opt.threads);
    const double trace_lb = trace_capacity_lb(a);
    const CapacityResult lower = capacity_lower(members, iters, 1e-10);
    double upper = kNan;
    if (opt.family == "simplex" || opt.family == "shared-atom")
        upper = capacity_upper_ratio_discrete_simplex(static_cast<std::size_t>(opt.m),
                                                      opt.theta[0]);
    else if (opt.family == "gaussian") {
        double mu = 0.0;
        for (double t : opt.theta) mu = std::max(mu, std::abs(t));
        std::vector<double> tau_grid;
        for (double tau = 1.05; tau <= 4.0; tau += 0.05) tau_grid.push_back(tau);
        upper = capacity_upper_ratio_gaussian_family(mu, tau_grid);
    }
    Report rep("capacity");
    echo_family_config(rep, opt);
    rep.config("samples", std::to_string(opt.samples));
    rep.config("format", opt.format);
    rep.header({"n", "trace_lb", "capacity_lower", "capacity_upper", "iterations"});
    rep.row({std::to_string(members.size()), fmt17(trace_lb), fmt17(lower.value),
             fmt17(upper), std::to_string(lower.iterations_used)});
    emit(rep.render(opt.format), opt.out);
    return 0;
}

int cmd_cheeger(const Options& opt) {
    check_format(opt.format);
    const std::vector<Member> members = build_members(opt);
    std::vector<long long> ks = opt.k;
    if (ks.empty()) ks.push_back(2);
    const OverlapMatrix a = build_overlap(members, {}, opt.threads);
    Report rep("cheeger");
    echo_family_config(rep, opt);
    if (!opt.k.empty()) rep.config("k", join(opt.k));
    rep.config("format", opt.format);
    rep.header({"k", "lambda_k", "cheeger_lhs", "rho_k", "cheeger_slack",
                "cheeger_pass", "comb_rho5", "comb_lhs", "comb_slack", "comb_pass",
                "reported_ratio"});
    for (long long k : ks) {
        if (k < 1) throw validation_error("--k must be >= 1");
        const InequalityAudit audit =
            inequality_audit(a, members, static_cast<std::size_t>(k));
        rep.row({std::to_string(k), fmt17(audit.lambda_k), fmt17(audit.cheeger_lhs),
                 fmt17(audit.rho_k), fmt17(audit.cheeger_slack),
                 audit.cheeger_pass ? "1" : "0",
                 fmt17(audit.comb_rho5 ? *audit.comb_rho5 : kNan),
                 fmt17(audit.comb_lhs ? *audit.comb_lhs : kNan),
                 fmt17(audit.comb_slack ? *audit.comb_slack : kNan),
                 audit.comb_pass ? (*audit.comb_pass ? "1" : "0") : "nan",
                 fmt17(audit.reported_ratio)});
    }
    emit(rep.render(opt.format), opt.out);
    return 0;
}

SquareMatrix random_positive_matrix(std::size_t n, std::uint64_t seed,
                                    std::uint64_t stream) {
    RngStream rng(seed, stream);
    SquareMatrix m(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = 0.05 + rng.uniform01();
    return m;
}

int cmd_hessian_check(const Options& opt) {
    check_format(opt.format);
    std::vector<long long> ns = opt.n;
    if (ns.empty()) ns = {4};
    if (opt.samples < 1) throw validation_error("--samples must be >= 1");
    Report rep("hessian-check");
    rep.config("n", join(ns));
    rep.config("seed", std::to_string(opt.seed));
    rep.config("samples", std::to_string(opt.samples));
    rep.config("format", opt.format);
    rep.header({"n", "sample", "log_lhs", "log_rhs", "rel_err"});
    for (long long n : ns) {
        if (n < 2 || n > 8) throw validation_error("--n must be in [2, 8]");
        for (long long s = 0; s < opt.samples; ++s) {
            const SquareMatrix raw = random_positive_matrix(
                static_cast<std::size_t>(n), opt.seed,
                static_cast<std::uint64_t>(s) * 97 + static_cast<std::uint64_t>(n));
            const SquareMatrix ds = sinkhorn_project(raw, 1e-12, 20000);
            const HessianCheck check = hessian_det_check(ds);
            rep.row({std::to_string(n), std::to_string(s), fmt17(check.log_lhs),
                     fmt17(check.log_rhs), fmt17(check.rel_err)});
        }
    }
    emit(rep.render(opt.format), opt.out);
    return 0;
}

OverlapMatrix two_point_overlap(double lambda2) {
    if (!(lambda2 >= 0.0 && lambda2 < 1.0))
        throw validation_error("lambda2 must lie in [0, 1)");
    SquareMatrix m(2);
    m(0, 0) = m(1, 1) = 0.5 * (1.0 + lambda2);
    m(0, 1) = m(1, 0) = 0.5 * (1.0 - lambda2);
    return overlap_from_entries(m);
}

int cmd_replication(const Options& opt) {
    check_format(opt.format);
    if (opt.m < 1) throw validation_error("--m (max replication) must be >= 1");
    Report rep("replication");

    // Either an explicit family (n <= 3) or a grid of two-point lambda2 values.
    std::vector<std::pair<double, OverlapMatrix>> cases;
    if (!opt.theta.empty()) {
        const std::vector<Member> members = build_members(opt);
        const OverlapMatrix a = build_overlap(members, {}, opt.threads);
        const SpectrumReport spec = eigen_sym(a.entries);
        cases.emplace_back(spec.eigenvalues.size() > 1 ? spec.eigenvalues[1] : 0.0, a);
        echo_family_config(rep, opt);
    } else {
        if (opt.grid.empty())
            throw validation_error("--grid must list two-point lambda2 values");
        for (double l : opt.grid) cases.emplace_back(l, two_point_overlap(l));
        rep.config("grid", join(opt.grid));
        rep.config("seed", std::to_string(opt.seed));
    }
    rep.config("m", std::to_string(opt.m));
    rep.config("format", opt.format);
    rep.header({"lambda2", "m", "chi2_repl", "log1p_chi2_repl", "target_chi2",
                "target_log", "ratio_to_target"});
    for (const auto& [lambda2, a] : cases) {
        const SpectrumReport spec = eigen_sym(a.entries);
        const double target_log = spectral_lower(spec);
        const double target_chi2 = std::expm1(target_log);
        for (long long m = 1; m <= opt.m; ++m) {
            const double chi2 = replicated_chi2(a, static_cast<std::size_t>(m));
            rep.row({fmt17(lambda2), std::to_string(m), fmt17(chi2),
                     fmt17(std::log1p(chi2)), fmt17(target_chi2), fmt17(target_log),
                     fmt17(target_chi2 > 0.0 ? chi2 / target_chi2 : kNan)});
        }
    }
    emit(rep.render(opt.format), opt.out);
    return 0;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

int cmd_sweep(const Options& opt, MixingModel model) {
    check_format(opt.format);
    if (opt.grid.empty()) throw validation_error("--grid must list separation values");
    std::vector<long long> ns = opt.n;
    if (ns.empty()) ns = {2};
    const bool gaussian = model == MixingModel::gaussian;
    Report rep(gaussian ? "sweep-gaussian" : "sweep-poisson");
    rep.config("grid", join(opt.grid));
    rep.config("n", join(ns));
    rep.config("seed", std::to_string(opt.seed));
    rep.config("format", opt.format);
    rep.header({"sep", "n", "f", "chi2_closed", "log1p_chi2_closed", "chi2_exact",
                "log1p_chi2_exact", "residual", "method", "sqrt_log_n", "rate_ratio",
                "regime"});
    for (long long n : ns) {
        if (n < 2 || n % 2 != 0)
            throw validation_error("sweeps need even --n >= 2");
        for (double sep : opt.grid) {
            if (!(sep >= 0.0)) throw validation_error("--grid values must be >= 0");
            const double f = mixing_scalar(model, sep);
            const std::size_t half = static_cast<std::size_t>(n / 2);
            const double chi2_closed = two_component_chi2(half, f);
            double chi2_perm = kNan, residual = kNan;
            std::string method = "closed";
            if (n <= 12) {
                std::vector<Member> members;
                members.reserve(static_cast<std::size_t>(n));
                for (std::size_t i = 0; i < half; ++i)
                    members.push_back(gaussian ? Member::gaussian_loc(-sep)
                                               : Member::poisson(0.0));
                for (std::size_t i = 0; i < half; ++i)
                    members.push_back(gaussian ? Member::gaussian_loc(sep)
                                               : Member::poisson(sep));
                chi2_perm = chi2_exact(members);
                residual = std::abs(chi2_closed - chi2_perm);
                method = "closed+permanent";
            }
            const double logn = std::log(static_cast<double>(n));
            const double sqrt_log_n = std::sqrt(logn);
            const double scale = sep * sqrt_log_n;
            const double rate_ratio =
                scale > 0.0 ? std::log1p(chi2_closed) / scale : kNan;
            const char* regime = sep == 0.0             ? "zero"
                                 : sep <= sqrt_log_n    ? "below-sqrtlog"
                                 : sep <= std::pow(static_cast<double>(n), 0.99)
                                     ? "exp-rate"
                                     : "above";
            rep.row({fmt17(sep), std::to_string(n), fmt17(f), fmt17(chi2_closed),
                     fmt17(std::log1p(chi2_closed)), fmt17(chi2_perm),
                     fmt17(std::log1p(chi2_perm)), fmt17(residual), method,
                     fmt17(sqrt_log_n), fmt17(rate_ratio), regime});
        }
    }
    emit(rep.render(opt.format), opt.out);
    return 0;
}

int cmd_compound_gap(const Options& opt) {
    check_format(opt.format);
    if (opt.grid.empty()) throw validation_error("--grid must list h values");
    if (opt.n.size() != 1 || opt.n[0] < 2 || opt.n[0] % 2 != 0)
        throw validation_error("compound-gap needs a single even --n >= 2");
    if (opt.samples < 1) throw validation_error("--samples must be >= 1");
    const std::size_t n = static_cast<std::size_t>(opt.n[0]);
    Report rep("compound-gap");
    rep.config("grid", join(opt.grid));
    rep.config("n", std::to_string(opt.n[0]));
    rep.config("seed", std::to_string(opt.seed));
    rep.config("samples", std::to_string(opt.samples));
    rep.config("format", opt.format);
    rep.header({"h", "n", "samples", "gap_mean", "gap_se", "normalized_gap",
                "aborted"});
    for (double h : opt.grid) {
        if (!(h > 0.0)) throw validation_error("--grid values must be > 0");
        CompoundInstance inst;
        inst.model = CompoundModel::gaussian_loc;
        inst.theta.assign(n, -0.5 * h);
        for (std::size_t i = n / 2; i < n; ++i) inst.theta[i] = 0.5 * h;
        const GapEstimate gap = regret_gap_mc(inst, opt.samples, opt.seed, opt.threads);
        rep.row({fmt17(h), std::to_string(n), std::to_string(gap.samples),
                 fmt17(gap.mean), fmt17(gap.std_error),
                 fmt17(gap.mean / (2.0 * h * (h + 2.0))),
                 std::to_string(gap.aborted)});
    }
    emit(rep.render(opt.format), opt.out);
    return 0;
}

// ---------------------------------------------------------------------------
// verify: the bundled invariant suite
// ---------------------------------------------------------------------------

struct AuditResult {
    std::string name;
    bool pass = true;
    double worst_slack = 1e300;
    long long cases = 0;
};

void fold(AuditResult& audit, double slack) {
    ++audit.cases;
    if (std::isnan(slack)) {
        audit.pass = false;
        audit.worst_slack = -1e300;
        return;
    }
    slack = std::min(slack, 1e300);
    audit.worst_slack = std::min(audit.worst_slack, slack);
    if (slack < 0.0) audit.pass = false;
}

std::vector<std::vector<Member>> verify_families(std::uint64_t seed) {
    std::vector<std::vector<Member>> out;
    out.push_back({Member::gaussian_loc(-1.0), Member::gaussian_loc(0.0),
                   Member::gaussian_loc(1.0)});
    out.push_back({Member::gaussian_loc(0.0), Member::gaussian_loc(0.5),
                   Member::gaussian_loc(1.5), Member::gaussian_loc(3.0)});
    out.push_back({Member::poisson(0.5), Member::poisson(1.0), Member::poisson(2.0),
                   Member::poisson(4.0)});
    out.push_back({Member::gaussian_scale(0.5), Member::gaussian_scale(1.0),
                   Member::gaussian_scale(2.0)});
    out.push_back(shared_atom_members(4, 0.2));
    out.push_back(swap_pair_members(0.25));
    out.push_back(simplex_grid_members(4, 0.1, 6, seed));
    return out;
}

AuditResult audit_overlap(std::uint64_t seed, bool inject, unsigned threads) {
    AuditResult audit{"overlap"};
    const auto families = verify_families(seed);
    for (std::size_t fi = 0; fi < families.size(); ++fi) {
        OverlapMatrix a = build_overlap(families[fi], {}, threads);
        if (inject && fi == 0) {
            // Negative control: nudge one entry without re-projection.
            SquareMatrix e = a.entries;
            e(0, 1) += 1e-3;
            a = overlap_from_entries(std::move(e));
        }
        const std::size_t n = a.size();
        double sym = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                sym = std::max(sym, std::abs(a.entries(i, j) - a.entries(j, i)));
        fold(audit, 1e-8 - sym);
        double ds = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double rs = 0.0, cs = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                rs += a.entries(i, j);
                cs += a.entries(j, i);
            }
            ds = std::max({ds, std::abs(rs - 1.0), std::abs(cs - 1.0)});
        }
        fold(audit, 1e-8 - ds);
        const SpectrumReport spec = eigen_sym(a.entries);
        fold(audit, spec.eigenvalues.back() + 1e-9);
        fold(audit, 1e-9 - std::abs(spec.eigenvalues.front() - 1.0));
    }
    return audit;
}

AuditResult audit_sandwich(std::uint64_t seed, unsigned threads) {
    AuditResult audit{"sandwich"};
    for (const auto& members : verify_families(seed)) {
        if (members.size() > 12) continue;
        const OverlapMatrix a = build_overlap(members, {}, threads);
        const double chi2 = chi2_exact(members);
        const double upper = spectral_upper(eigen_sym(a.entries));
        fold(audit, upper - std::log1p(chi2));
    }
    return audit;
}

std::vector<Member> random_family(RngStream& rng, bool gaussian, std::size_t n) {
    std::vector<Member> members;
    members.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (gaussian)
            members.push_back(Member::gaussian_loc(4.0 * rng.uniform01() - 2.0));
        else
            members.push_back(Member::poisson(0.2 + 4.0 * rng.uniform01()));
    }
    return members;
}

AuditResult audit_cheeger(std::uint64_t seed, unsigned threads) {
    AuditResult audit{"cheeger"};
    RngStream rng(seed, 1001);
    for (int c = 0; c < 6; ++c) {
        const std::size_t n = 4 + static_cast<std::size_t>(rng.uniform_int(4));
        const std::vector<Member> members = random_family(rng, c % 2 == 0, n);
        const OverlapMatrix a = build_overlap(members, {}, threads);
        for (std::size_t k : {std::size_t{2}, std::size_t{3}}) {
            if (k > n) continue;
            const InequalityAudit res = inequality_audit(a, members, k);
            fold(audit, res.cheeger_slack + 1e-12);
        }
    }
    for (int c = 0; c < 2; ++c) {
        std::vector<Member> members;
        const std::size_t n = 6;
        for (std::size_t i = 0; i < n; ++i)
            members.push_back(Member::gaussian_loc(
                2.0 * static_cast<double>(i) / static_cast<double>(n - 1) +
                0.3 * static_cast<double>(c)));
        const OverlapMatrix a = build_overlap(members, {}, threads);
        const InequalityAudit res = inequality_audit(a, members, 1);
        if (res.comb_slack) fold(audit, *res.comb_slack + 1e-12);
    }
    return audit;
}

AuditResult audit_hessian(std::uint64_t seed) {
    AuditResult audit{"hessian"};
    for (int c = 0; c < 10; ++c) {
        const std::size_t n = 2 + static_cast<std::size_t>(c % 5);
        const SquareMatrix raw =
            random_positive_matrix(n, seed, 2000 + static_cast<std::uint64_t>(c));
        const SquareMatrix ds = sinkhorn_project(raw, 1e-12, 20000);
        const HessianCheck check = hessian_det_check(ds);
        fold(audit, 1e-8 - check.rel_err);
    }
    return audit;
}

// Direct sum over all n! assignments; the reference the permanent path must
// reproduce.
OracleEval enumerate_oracle(const CompoundInstance& inst,
                            const std::vector<double>& x) {
    const std::size_t n = inst.size();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    double total = 0.0;
    std::vector<double> num(n, 0.0), first(n, 0.0);
    std::vector<double> sep_num(n, 0.0), sep_den(n, 0.0);
    do {
        double w = 1.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double t = inst.theta[perm[j]];
            if (inst.model == CompoundModel::gaussian_loc) {
                const double d = x[j] - t;
                w *= std::exp(-0.5 * d * d);
            } else {
                w *= t == 0.0 ? (x[j] == 0.0 ? 1.0 : 0.0)
                              : std::exp(x[j] * std::log(t) - t -
                                         std::lgamma(x[j] + 1.0));
            }
        }
        total += w;
        for (std::size_t j = 0; j < n; ++j) num[j] += w * inst.theta[perm[j]];
        first[perm[0]] += w;
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double f;
            if (inst.model == CompoundModel::gaussian_loc) {
                const double d = x[i] - inst.theta[j];
                f = std::exp(-0.5 * d * d);
            } else {
                f = inst.theta[j] == 0.0
                        ? (x[i] == 0.0 ? 1.0 : 0.0)
                        : std::exp(x[i] * std::log(inst.theta[j]) - inst.theta[j] -
                                   std::lgamma(x[i] + 1.0));
            }
            sep_num[i] += f * inst.theta[j];
            sep_den[i] += f;
        }
    }
    OracleEval out;
    out.pi.resize(n);
    out.posterior_first.resize(n);
    out.sep.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.pi[i] = num[i] / total;
        out.posterior_first[i] = first[i] / total;
        out.sep[i] = sep_num[i] / sep_den[i];
    }
    return out;
}

void draw_instance_sample(const CompoundInstance& inst, RngStream& rng,
                          std::vector<double>& x) {
    const std::size_t n = inst.size();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    x.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = inst.theta[perm[i]];
        x[i] = inst.model == CompoundModel::gaussian_loc
                   ? t + rng.normal()
                   : static_cast<double>(rng.poisson(t));
    }
}

AuditResult audit_oracle(std::uint64_t seed) {
    AuditResult audit{"oracle"};
    for (int c = 0; c < 6; ++c) {
        RngStream rng(seed, 3000 + static_cast<std::uint64_t>(c));
        CompoundInstance inst;
        inst.model = c % 2 == 0 ? CompoundModel::gaussian_loc : CompoundModel::poisson;
        const std::size_t n = 3 + static_cast<std::size_t>(c % 3);
        inst.theta.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            inst.theta[i] = inst.model == CompoundModel::gaussian_loc
                                ? 3.0 * rng.uniform01() - 1.5
                                : 0.3 + 3.0 * rng.uniform01();
        std::vector<double> x;
        draw_instance_sample(inst, rng, x);
        const OracleEval fast = pi_oracle(inst, x);
        const OracleEval slow = enumerate_oracle(inst, x);
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double scale = std::max(1e-12, std::abs(slow.pi[i]));
            worst = std::max(worst, std::abs(fast.pi[i] - slow.pi[i]) / scale);
            worst = std::max(worst, std::abs(fast.posterior_first[i] -
                                             slow.posterior_first[i]));
        }
        fold(audit, 1e-10 - worst);
    }
    return audit;
}

AuditResult audit_orthogonality(std::uint64_t seed, unsigned threads) {
    AuditResult audit{"orthogonality"};
    CompoundInstance g;
    g.model = CompoundModel::gaussian_loc;
    g.theta = {-1.0, 0.0, 0.5, 2.0};
    CompoundInstance p;
    p.model = CompoundModel::poisson;
    p.theta = {0.5, 1.0, 3.0};
    for (const CompoundInstance& inst : {g, p}) {
        const OrthogonalityCheck check =
            orthogonality_check(inst, 20000, seed, threads);
        fold(audit, 4.0 * check.combined_se - std::abs(check.lhs - check.rhs));
    }
    return audit;
}

AuditResult audit_interpolation(std::uint64_t seed) {
    AuditResult audit{"interpolation"};
    CompoundInstance g;
    g.model = CompoundModel::gaussian_loc;
    g.theta = {-1.0, 0.0, 1.0};
    CompoundInstance p;
    p.model = CompoundModel::poisson;
    p.theta = {0.5, 3.0};
    int c = 0;
    for (const CompoundInstance& inst : {g, p}) {
        for (int r = 0; r < 50; ++r) {
            RngStream rng(seed, 4000 + static_cast<std::uint64_t>(c * 1000 + r));
            std::vector<double> x;
            draw_instance_sample(inst, rng, x);
            const InterpCheck check = interp_identity_check(inst, x);
            fold(audit, 1e-7 - std::max(check.residual_direct, check.residual_route));
        }
        ++c;
    }
    return audit;
}

AuditResult audit_transportation(std::uint64_t seed) {
    AuditResult audit{"transportation"};
    const double hs[] = {0.5, 2.0, 8.0};
    for (int c = 0; c < 40; ++c) {
        RngStream rng(seed, 5000 + static_cast<std::uint64_t>(c));
        const double h = hs[c % 3];
        const std::size_t L = 1 + static_cast<std::size_t>(rng.uniform_int(3));
        std::vector<double> rates(L), weights(L);
        double wsum = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
            rates[l] = h * rng.uniform01();
            weights[l] = -std::log(rng.uniform01());
            wsum += weights[l];
        }
        for (std::size_t l = 0; l < L; ++l) weights[l] /= wsum;
        // mu: a truncated, renormalized Poisson mixture with rates in [0, h];
        // truncation only lowers the mean, so the precondition stays valid.
        const std::size_t support =
            static_cast<std::size_t>(std::ceil(2.0 * h + 25.0));
        std::vector<double> mu(support, 0.0);
        const double mu_rate = h * rng.uniform01();
        double psum = 0.0;
        for (std::size_t v = 0; v < support; ++v) {
            const double dv = static_cast<double>(v);
            mu[v] = mu_rate == 0.0 ? (v == 0 ? 1.0 : 0.0)
                                   : std::exp(dv * std::log(mu_rate) - mu_rate -
                                              std::lgamma(dv + 1.0));
            psum += mu[v];
        }
        for (std::size_t v = 0; v < support; ++v) mu[v] /= psum;
        const TransportationCheck check = transportation_check(h, rates, weights, mu);
        fold(audit, check.rhs - check.lhs + 1e-12);
    }
    return audit;
}

AuditResult audit_tilt(std::uint64_t seed) {
    AuditResult audit{"tilt"};
    std::vector<double> t_grid;
    for (int i = 0; i <= 40; ++i) t_grid.push_back(-10.0 + 0.5 * i);
    const double h = 4.0;
    for (int c = 0; c < 30; ++c) {
        RngStream rng(seed, 6000 + static_cast<std::uint64_t>(c));
        const std::size_t K = 1 + static_cast<std::size_t>(rng.uniform_int(5));
        GaussianMixture post;
        post.sd = 0.5;
        const double base = 4.0 * rng.uniform01() - 2.0;
        double wsum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            post.means.push_back(base + 0.5 * h * rng.uniform01());
            post.weights.push_back(-std::log(rng.uniform01()));
            wsum += post.weights.back();
        }
        for (double& w : post.weights) w /= wsum;
        const TiltVarianceCheck check = tilt_variance_check(post, h, t_grid);
        fold(audit, check.bound - check.max_var + 1e-12);
    }
    return audit;
}

int cmd_verify(const Options& opt) {
    std::vector<AuditResult> audits;
    auto want = [&](const char* name) {
        return opt.only.empty() || opt.only == name;
    };
    if (want("overlap"))
        audits.push_back(audit_overlap(opt.seed, opt.inject_overlap_perturbation,
                                       opt.threads));
    if (want("sandwich")) audits.push_back(audit_sandwich(opt.seed, opt.threads));
    if (want("cheeger")) audits.push_back(audit_cheeger(opt.seed, opt.threads));
    if (want("hessian")) audits.push_back(audit_hessian(opt.seed));
    if (want("oracle")) audits.push_back(audit_oracle(opt.seed));
    if (want("orthogonality"))
        audits.push_back(audit_orthogonality(opt.seed, opt.threads));
    if (want("interpolation")) audits.push_back(audit_interpolation(opt.seed));
    if (want("transportation")) audits.push_back(audit_transportation(opt.seed));
    if (want("tilt")) audits.push_back(audit_tilt(opt.seed));
    if (audits.empty())
        throw validation_error("unknown audit name for --only: " + opt.only);

    bool all_pass = true;
    ordered_json doc;
    doc["version"] = kVersion;
    ordered_json cfg;
    cfg["command"] = "verify";
    cfg["seed"] = opt.seed;
    cfg["only"] = opt.only;
    cfg["inject_overlap_perturbation"] = opt.inject_overlap_perturbation;
    cfg["format"] = "json";
    doc["config"] = cfg;
    ordered_json list = ordered_json::array();
    for (const AuditResult& audit : audits) {
        ordered_json entry;
        entry["name"] = audit.name;
        entry["pass"] = audit.pass;
        entry["worst_slack"] = audit.worst_slack;
        entry["cases"] = audit.cases;
        list.push_back(entry);
        all_pass = all_pass && audit.pass;
    }
    doc["audits"] = list;
    doc["all_pass"] = all_pass;
    emit(doc.dump(2) + "\n", opt.out);
    return all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"permutation mixture toolkit"};
    app.require_subcommand(1);
    Options opt;

    auto add_family_flags = [&](CLI::App* sub) {
        sub->add_option("--family", opt.family,
                        "gaussian | poisson | scale | shared-atom | swap-pair | simplex");
        sub->add_option("--theta", opt.theta,
                        "member parameters (or the single family parameter)")
            ->delimiter(',');
        sub->add_option("--m", opt.m, "category count for discrete families");
        sub->add_option("--n", opt.n, "member counts")->delimiter(',');
        sub->add_option("--seed", opt.seed, "rng seed");
    };
    auto add_io_flags = [&](CLI::App* sub) {
        sub->add_option("--out", opt.out, "output path (default stdout)");
        sub->add_option("--format", opt.format, "csv | json");
        sub->add_option("--threads", opt.threads, "worker threads");
    };

    CLI::App* overlap = app.add_subcommand("overlap", "overlap matrix of a family");
    add_family_flags(overlap);
    add_io_flags(overlap);

    CLI::App* chi2 = app.add_subcommand("chi2", "exact chi^2 divergence via permanents");
    add_family_flags(chi2);
    add_io_flags(chi2);

    CLI::App* bounds = app.add_subcommand("bounds", "spectral and diagonal bounds");
    add_family_flags(bounds);
    add_io_flags(bounds);

    CLI::App* diameter = app.add_subcommand("diameter", "partition diameters");
    add_family_flags(diameter);
    diameter->add_option("--k", opt.k, "block counts")->delimiter(',');
    add_io_flags(diameter);

    CLI::App* capacity = app.add_subcommand("capacity", "capacity bracket for a grid");
    add_family_flags(capacity);
    capacity->add_option("--samples", opt.samples, "ascent iterations");
    add_io_flags(capacity);

    CLI::App* cheeger = app.add_subcommand("cheeger", "expansion inequality audit");
    add_family_flags(cheeger);
    cheeger->add_option("--k", opt.k, "expansion orders")->delimiter(',');
    add_io_flags(cheeger);

    CLI::App* hessian = app.add_subcommand("hessian-check", "determinant identity audit");
    hessian->add_option("--n", opt.n, "matrix sizes")->delimiter(',');
    hessian->add_option("--seed", opt.seed, "rng seed");
    hessian->add_option("--samples", opt.samples, "matrices per size");
    add_io_flags(hessian);

    CLI::App* replication = app.add_subcommand("replication", "replicated chi^2 trajectory");
    add_family_flags(replication);
    replication->add_option("--grid", opt.grid, "two-point lambda2 values")->delimiter(',');
    add_io_flags(replication);

    CLI::App* sweep_g = app.add_subcommand("sweep-gaussian", "two-point Gaussian sweep");
    sweep_g->add_option("--grid", opt.grid, "mean separations mu")->required()->delimiter(',');
    sweep_g->add_option("--n", opt.n, "member counts (even)")->delimiter(',');
    sweep_g->add_option("--seed", opt.seed, "rng seed");
    add_io_flags(sweep_g);

    CLI::App* sweep_p = app.add_subcommand("sweep-poisson", "two-point Poisson sweep");
    sweep_p->add_option("--grid", opt.grid, "rate separations M")->required()->delimiter(',');
    sweep_p->add_option("--n", opt.n, "member counts (even)")->delimiter(',');
    sweep_p->add_option("--seed", opt.seed, "rng seed");
    add_io_flags(sweep_p);

    CLI::App* gap = app.add_subcommand("compound-gap", "oracle regret gap Monte Carlo");
    gap->add_option("--grid", opt.grid, "parameter ranges h")->required()->delimiter(',');
    gap->add_option("--n", opt.n, "units (even)")->delimiter(',');
    gap->add_option("--seed", opt.seed, "rng seed");
    gap->add_option("--samples", opt.samples, "Monte Carlo samples");
    add_io_flags(gap);

    CLI::App* verify = app.add_subcommand("verify", "run the invariant suite");
    verify->add_option("--seed", opt.seed, "rng seed");
    verify->add_option("--only", opt.only, "run a single audit by name");
    verify->add_flag("--inject-overlap-perturbation", opt.inject_overlap_perturbation,
                     "negative control: perturb one overlap entry");
    verify->add_option("--out", opt.out, "output path (default stdout)");
    verify->add_option("--threads", opt.threads, "worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (overlap->parsed()) return cmd_overlap(opt);
        if (chi2->parsed()) return cmd_chi2(opt);
        if (bounds->parsed()) return cmd_bounds(opt);
        if (diameter->parsed()) return cmd_diameter(opt);
        if (capacity->parsed()) return cmd_capacity(opt);
        if (cheeger->parsed()) return cmd_cheeger(opt);
        if (hessian->parsed()) return cmd_hessian_check(opt);
        if (replication->parsed()) return cmd_replication(opt);
        if (sweep_g->parsed()) return cmd_sweep(opt, MixingModel::gaussian);
        if (sweep_p->parsed()) return cmd_sweep(opt, MixingModel::poisson);
        if (gap->parsed()) return cmd_compound_gap(opt);
        if (verify->parsed()) return cmd_verify(opt);
    } catch (const validation_error& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const capacity_error& e) {
        std::cerr << "capacity error: " << e.what() << "\n";
        return 3;
    } catch (const numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}

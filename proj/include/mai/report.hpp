#pragma once

// End-to-end analysis pipeline and report writers (CSV tables, heatmap
// grids, JSON validation summary).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mai/network_io.hpp"
#include "mai/sensitivity.hpp"

namespace mai {

/// Exit codes shared by the command-line tools.
enum ExitCode : int { exit_ok = 0, exit_input_error = 2, exit_numerical_failure = 3 };

/// Formats with 12 significant digits.
inline std::string fmt_num(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

struct AnalysisConfig {
    std::filesystem::path network;
    double w_min = 1.0;
    double w_max = 1e4;
    int order = 30;
    int iterations = 15;
    std::size_t points = 400;
    double epsilon = 0.05;
    std::optional<std::vector<int>> modes;  // 1-based, empty optional = all
    std::filesystem::path out_dir = "mai_out";
    bool export_samples = false;
    unsigned seed = 0;

    void check() const {
        if (!(w_min > 0.0) || !(w_max > w_min)) throw InputError("band must satisfy 0 < min < max");
        if (order < 2) throw InputError("fit order must be >= 2");
        if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
        if (points < 2) throw InputError("need at least 2 grid points");
    }
};

/// n x n grid: (i, i) apparatus at bus i, (i, j) branches between i and j.
struct HeatmapTable {
    int n = 0;
    std::vector<std::optional<double>> cells;
    std::vector<std::string> notes;

    std::optional<double>& at(int i, int j) { return cells[static_cast<std::size_t>((i - 1) * n + (j - 1))]; }
    const std::optional<double>& at(int i, int j) const {
        return cells[static_cast<std::size_t>((i - 1) * n + (j - 1))];
    }
};

/// Places per-element values into the bus grid. Parallel branches between
/// the same bus pair are summed and noted; shunts have no cell.
inline HeatmapTable build_heatmap(const NetworkDescription& net, const std::vector<std::pair<ElementRef, double>>& values) {
    HeatmapTable t;
    t.n = net.n_buses;
    t.cells.assign(static_cast<std::size_t>(t.n * t.n), std::nullopt);
    std::map<std::pair<int, int>, int> counts;
    for (const auto& [e, v] : values) {
        if (e.kind == ElementKind::apparatus) {
            const int b = net.apparatus.at(e.index).bus;
            t.at(b, b) = t.at(b, b).value_or(0.0) + v;
        } else if (e.kind == ElementKind::branch) {
            const auto& br = net.branches.at(e.index);
            const int i = std::min(br.from, br.to), j = std::max(br.from, br.to);
            t.at(i, j) = t.at(i, j).value_or(0.0) + v;
            t.at(j, i) = t.at(i, j);
            ++counts[{i, j}];
        }
    }
    for (const auto& [key, c] : counts)
        if (c > 1)
            t.notes.push_back(std::to_string(c) + " parallel branches summed in cell " + std::to_string(key.first) + "-" +
                              std::to_string(key.second));
    return t;
}

inline void write_heatmap_csv(std::ostream& out, const HeatmapTable& t) {
    out << "bus";
    for (int j = 1; j <= t.n; ++j) out << ',' << j;
    out << '\n';
    for (int i = 1; i <= t.n; ++i) {
        out << i;
        for (int j = 1; j <= t.n; ++j) {
            out << ',';
            if (const auto& v = t.at(i, j)) out << fmt_num(*v);
        }
        out << '\n';
    }
    for (const auto& note : t.notes) out << "note," << note << '\n';
}

inline void emit_heatmap(const std::filesystem::path& path, const NetworkDescription& net,
                         const std::vector<std::pair<ElementRef, double>>& values) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path.string());
    write_heatmap_csv(f, build_heatmap(net, values));
}

/// One row per sweep step; the last row also carries the trajectory endpoints.
inline void sweep_report(std::ostream& out, const std::vector<SweepPoint>& points) {
    out << "step,rho,predicted_re,predicted_im,actual_re,actual_im,error,start_re,start_im,end_re,end_im\n";
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& p = points[k];
        out << p.step << ',' << fmt_num(p.rho) << ',' << fmt_num(p.predicted.real()) << ','
            << fmt_num(p.predicted.imag()) << ',' << fmt_num(p.actual.real()) << ',' << fmt_num(p.actual.imag())
            << ',' << fmt_num(p.validation.error);
        if (k + 1 == points.size()) {
            const auto& first = points.front();
            out << ',' << fmt_num(first.previous.real()) << ',' << fmt_num(first.previous.imag()) << ','
                << fmt_num(p.actual.real()) << ',' << fmt_num(p.actual.imag());
        } else {
            out << ",,,,";
        }
        out << '\n';
    }
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p);
    if (!f) throw InputError("cannot write " + p.string());
    return f;
}

inline nlohmann::json cjson(cdouble z) { return nlohmann::json::array({z.real(), z.imag()}); }

inline void write_error_report(const std::filesystem::path& dir, const std::string& kind, const std::string& msg) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream f(dir / "error.json");
    if (f) f << nlohmann::json{{"status", "error"}, {"kind", kind}, {"message", msg}}.dump(2) << '\n';
}

}  // namespace detail

struct AnalysisResult {
    std::vector<ModeRecord> modes;
    std::vector<std::size_t> selected;  // 0-based indices into modes
    std::vector<std::vector<ElementResult>> elements;
};

/// Runs the analysis and writes every report into config.out_dir.
inline AnalysisResult analyze(const AnalysisConfig& config) {
    config.check();
    const auto net = load_network(config.network);
    const WholeSystemModel model(net);
    ModeSearchOptions mo;
    mo.w_min = config.w_min;
    mo.w_max = config.w_max;
    mo.order = config.order;
    mo.iterations = config.iterations;
    mo.points = config.points;
    const auto search = find_modes(model, mo);

    AnalysisResult result;
    result.modes = search.modes;
    if (config.modes) {
        for (int idx : *config.modes) {
            if (idx < 1 || static_cast<std::size_t>(idx) > result.modes.size())
                throw InputError("mode index " + std::to_string(idx) + " does not exist (found " +
                                 std::to_string(result.modes.size()) + " modes)");
            result.selected.push_back(static_cast<std::size_t>(idx - 1));
        }
    } else {
        for (std::size_t k = 0; k < result.modes.size(); ++k) result.selected.push_back(k);
    }

    std::filesystem::create_directories(config.out_dir);
    const auto& dir = config.out_dir;
    {
        auto f = detail::open_out(dir / "modes.csv");
        f << "index,real,imag,frequency_hz,damping_ratio,provenance\n";
        for (std::size_t k = 0; k < result.modes.size(); ++k) {
            const auto l = result.modes[k].lambda;
            f << k + 1 << ',' << fmt_num(l.real()) << ',' << fmt_num(l.imag()) << ','
              << fmt_num(l.imag() / (2.0 * std::numbers::pi)) << ',' << fmt_num(-l.real() / std::abs(l)) << ','
              << to_string(result.modes[k].provenance) << '\n';
        }
    }
    if (config.export_samples) {
        auto f = detail::open_out(dir / "z_samples.csv");
        write_response_csv(f, sample_response(model, search.grid));
    }

    nlohmann::json validation;
    validation["seed"] = config.seed;
    validation["epsilon"] = config.epsilon;
    validation["band"] = {config.w_min, config.w_max};
    validation["fit"] = {{"order", config.order},
                         {"rms_relative", search.fit.rms_relative},
                         {"max_relative", search.fit.max_relative},
                         {"status", search.fit.status == FitStatus::ok ? "ok" : "warning"},
                         {"message", search.fit.message}};
    std::optional<EigenStructure> oracle;
    if (oracle_capable(net)) {
        try {
            oracle = eigendecompose(interconnect(net).A);
        } catch (const std::exception& e) {
            validation["state_space_oracle"] = std::string("unavailable: ") + e.what();
        }
    } else {
        validation["state_space_oracle"] = "unavailable: apparatus without realization";
    }
    validation["modes"] = nlohmann::json::array();

    std::vector<cdouble> all_lambdas;
    for (const auto& m : result.modes) all_lambdas.push_back(m.lambda);

    for (auto k : result.selected) {
        const auto& mode = result.modes[k];
        const auto tag = "mode" + std::to_string(k + 1);
        auto elems = element_participation(model, mode, config.epsilon);

        std::vector<std::pair<ElementRef, double>> l1, l1e, l2r, l2i;
        for (const auto& r : elems) {
            l1.emplace_back(r.element, r.layers.layer1_cauchy);
            l1e.emplace_back(r.element, r.layers.layer1_enhanced);
            l2r.emplace_back(r.element, r.layers.layer2.real());
            l2i.emplace_back(r.element, r.layers.layer2.imag());
        }
        emit_heatmap(dir / (tag + "_layer1.csv"), net, l1);
        emit_heatmap(dir / (tag + "_layer1_enhanced.csv"), net, l1e);
        emit_heatmap(dir / (tag + "_layer2_real.csv"), net, l2r);
        emit_heatmap(dir / (tag + "_layer2_imag.csv"), net, l2i);

        {
            auto f = detail::open_out(dir / (tag + "_elements.csv"));
            f << "element,kind,bus_i,bus_j,ratio,layer1_cauchy,layer2_re,layer2_im,layer1_enhanced\n";
            for (const auto& r : elems) {
                const auto loc = r.sensitivity.location;
                const char* kind = r.element.kind == ElementKind::apparatus ? "apparatus"
                                   : r.element.kind == ElementKind::shunt   ? "shunt"
                                                                            : "branch";
                f << r.label << ',' << kind << ',' << loc.i << ',' << (loc.kind == Location::Kind::node ? 0 : loc.j)
                  << ',' << fmt_num(loc.k) << ',' << fmt_num(r.layers.layer1_cauchy) << ','
                  << fmt_num(r.layers.layer2.real()) << ',' << fmt_num(r.layers.layer2.imag()) << ','
                  << fmt_num(r.layers.layer1_enhanced) << '\n';
            }
        }
        {
            auto f = detail::open_out(dir / (tag + "_layer3.csv"));
            f << "element,param,rho,s_re,s_im\n";
            for (const auto& r : elems) {
                if (r.element.kind != ElementKind::branch) continue;
                const auto& b = net.branches[r.element.index];
                for (const auto& [param, s] : r.layers.layer3)
                    f << r.label << ',' << param << ',' << fmt_num(param == "L" ? b.L : b.R) << ','
                      << fmt_num(s.real()) << ',' << fmt_num(s.imag()) << '\n';
            }
        }

        nlohmann::json mj;
        mj["index"] = k + 1;
        mj["lambda"] = detail::cjson(mode.lambda);
        mj["provenance"] = to_string(mode.provenance);
        if (oracle) {
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < oracle->values.size(); ++i)
                best = std::min(best, std::abs(oracle->values(i) - mode.lambda));
            mj["state_space_relative_distance"] = best / std::abs(mode.lambda);
        }
        mj["elements"] = nlohmann::json::array();
        if (model.off_axis_capable()) {
            for (const auto& r : elems) {
                nlohmann::json ej;
                ej["element"] = r.label;
                const cdouble pred = config.epsilon * r.layers.layer2;
                try {
                    const cdouble actual =
                        track_mode(model.with_scale(r.element, 1.0 + config.epsilon), mode.lambda, mode.lambda + pred, all_lambdas) -
                        mode.lambda;
                    const auto v = validate_prediction(pred, actual);
                    ej["admittance"] = {{"predicted", detail::cjson(pred)},
                                        {"actual", detail::cjson(actual)},
                                        {"error", v.defined ? nlohmann::json(v.error) : nlohmann::json(nullptr)}};
                    if (r.element.kind == ElementKind::branch) {
                        const auto& b = net.branches[r.element.index];
                        const cdouble predL = r.layers.layer3.at("L") * b.L * config.epsilon;
                        const WholeSystemModel pert(
                            with_branch_parameter(net, r.element.index, BranchParameter::L, b.L * (1.0 + config.epsilon)));
                        const cdouble actL = track_mode(pert, mode.lambda, mode.lambda + predL, all_lambdas) - mode.lambda;
                        const auto vL = validate_prediction(predL, actL);
                        ej["parameter_L"] = {{"predicted", detail::cjson(predL)},
                                             {"actual", detail::cjson(actL)},
                                             {"error", vL.defined ? nlohmann::json(vL.error) : nlohmann::json(nullptr)}};
                    }
                } catch (const NumericalError& e) {
                    ej["error"] = e.what();
                }
                mj["elements"].push_back(ej);
            }
        }
        validation["modes"].push_back(mj);
        result.elements.push_back(std::move(elems));
    }
    {
        auto f = detail::open_out(dir / "validation.json");
        f << validation.dump(2) << '\n';
    }
    return result;
}

/// Wraps a pipeline step: maps InputError to exit code 2 and numerical
/// failures to 3, writing error.json into `dir`.
template <class F>
int guarded(const std::filesystem::path& dir, F&& body) {
    try {
        body();
        return exit_ok;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        detail::write_error_report(dir, "input", e.what());
        return exit_input_error;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        detail::write_error_report(dir, "numerical", e.what());
        return exit_numerical_failure;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return exit_input_error;
    }
}

inline int run(const AnalysisConfig& config) {
    return guarded(config.out_dir, [&] { analyze(config); });
}

}  // namespace mai

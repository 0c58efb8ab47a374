// Command-line front end: analyze, sweep, fit.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mai/mai.hpp"

namespace {

using namespace mai;

std::pair<double, double> parse_pair(const std::string& text, const std::string& what) {
    const auto colon = text.find(':');
    double a = 0.0, b = 0.0;
    if (colon == std::string::npos || !detail::parse_double(text.substr(0, colon), a) ||
        !detail::parse_double(text.substr(colon + 1), b))
        throw InputError(what + " must look like A:B, got '" + text + "'");
    return {a, b};
}

std::optional<std::vector<int>> parse_modes(const std::string& text) {
    if (text.empty() || text == "all") return std::nullopt;
    std::vector<int> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw InputError("--modes expects a comma-separated list of indices or 'all', got '" + text + "'");
        }
    }
    return out;
}

std::size_t find_branch(const NetworkDescription& net, const std::string& text) {
    for (std::size_t k = 0; k < net.branches.size(); ++k)
        if (net.branches[k].name == text) return k;
    const auto [a, b] = parse_pair(text, "--branch");
    for (std::size_t k = 0; k < net.branches.size(); ++k) {
        const auto& br = net.branches[k];
        if ((br.from == a && br.to == b) || (br.from == b && br.to == a)) return k;
    }
    throw InputError("no branch between buses " + text);
}

/// Precedence: explicit --out, then MAI_OUT_DIR, then the built-in default.
std::filesystem::path output_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("MAI_OUT_DIR"); env && *env) return env;
    return "mai_out";
}

void do_sweep(const std::filesystem::path& file, const std::string& branch_spec, const std::string& param, double factor,
              int steps, const std::string& seed_text, const std::filesystem::path& dir) {
    if (param != "L" && param != "R") throw InputError("--param must be L or R");
    if (steps < 0) throw InputError("--steps must be non-negative");
    const auto p = param == "L" ? BranchParameter::L : BranchParameter::R;
    const auto net = load_network(file);
    const auto bi = find_branch(net, branch_spec);
    const auto& b = net.branches[bi];
    cdouble seed;
    if (!seed_text.empty()) {
        const auto [re, im] = parse_pair(seed_text, "--seed");
        seed = {re, im};
    } else {
        // Mode most sensitive to the swept parameter.
        const WholeSystemModel model(net);
        const auto modes = find_modes(model, {}).modes;
        if (modes.empty()) throw NumericalError("no modes found to seed the sweep");
        const double rho = p == BranchParameter::L ? b.L : b.R;
        double best = -1.0;
        for (const auto& m : modes) {
            const double w = std::abs(branch_parameter_sensitivity(m.residue, b, net.omega0, m.lambda, p) * rho);
            if (w > best) {
                best = w;
                seed = m.lambda;
            }
        }
    }
    const auto points = parameter_sweep(net, bi, p, factor, steps, seed);
    std::filesystem::create_directories(dir);
    std::ofstream f(dir / "sweep.csv");
    if (!f) throw InputError("cannot write " + (dir / "sweep.csv").string());
    sweep_report(f, points);
    std::cout << "sweep of " << b.name << "." << param << ": " << points.size() << " steps written to "
              << (dir / "sweep.csv").string() << '\n';
}

void do_fit(const std::filesystem::path& file, int order, int iterations, const std::filesystem::path& dir) {
    const auto samples = read_response_csv(file);
    VectorFitOptions opt;
    opt.order = order;
    opt.iterations = iterations;
    const auto fit = vector_fit(samples, opt);
    std::filesystem::create_directories(dir);
    std::ofstream f(dir / "fit_poles.csv");
    if (!f) throw InputError("cannot write " + (dir / "fit_poles.csv").string());
    f << "index,real,imag\n";
    for (Eigen::Index n = 0; n < fit.model.poles.size(); ++n)
        f << n + 1 << ',' << fmt_num(fit.model.poles(n).real()) << ',' << fmt_num(fit.model.poles(n).imag()) << '\n';
    std::cout << "poles: " << fit.model.poles.size() << "\nrms_relative: " << fmt_num(fit.rms_relative)
              << "\nmax_relative: " << fmt_num(fit.max_relative)
              << "\nstatus: " << (fit.status == FitStatus::ok ? "ok" : "warning") << '\n';
    if (!fit.message.empty()) std::cout << "message: " << fit.message << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Impedance-based modal analysis"};
    app.require_subcommand(1);

    std::string network, out, band = "1:10000", modes = "all";
    AnalysisConfig cfg;
    auto* analyze_cmd = app.add_subcommand("analyze", "Find modes and write participation reports");
    analyze_cmd->add_option("network", network, "Network JSON file")->required();
    analyze_cmd->add_option("--band", band, "Mode search band MIN:MAX in rad/s");
    analyze_cmd->add_option("--order", cfg.order, "Vector-fit order");
    analyze_cmd->add_option("--epsilon", cfg.epsilon, "Relative perturbation for layer 1 and validation");
    analyze_cmd->add_option("--modes", modes, "Comma-separated 1-based mode indices or 'all'");
    analyze_cmd->add_option("--out", out, "Output directory");
    analyze_cmd->add_option("--points", cfg.points, "Frequency samples in the band");
    analyze_cmd->add_option("--iterations", cfg.iterations, "Vector-fit relocation iterations");
    analyze_cmd->add_flag("--export-samples", cfg.export_samples, "Also write z_samples.csv");

    std::string branch, param = "L", seed;
    double factor = 0.8;
    int steps = 7;
    auto* sweep_cmd = app.add_subcommand("sweep", "Step one branch parameter and track a mode");
    sweep_cmd->add_option("network", network, "Network JSON file")->required();
    sweep_cmd->add_option("--branch", branch, "Branch as I:J or by name")->required();
    sweep_cmd->add_option("--param", param, "L or R");
    sweep_cmd->add_option("--factor", factor, "Multiplier applied at each step");
    sweep_cmd->add_option("--steps", steps, "Number of steps");
    sweep_cmd->add_option("--seed", seed, "Starting mode RE:IM (default: most sensitive mode)");
    sweep_cmd->add_option("--out", out, "Output directory");

    std::string samples;
    int order = 10, iterations = 10;
    auto* fit_cmd = app.add_subcommand("fit", "Vector-fit a sampled response CSV");
    fit_cmd->add_option("samples", samples, "Response CSV")->required();
    fit_cmd->add_option("--order", order, "Number of poles")->required();
    fit_cmd->add_option("--iterations", iterations, "Relocation iterations");
    fit_cmd->add_option("--out", out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_input_error;
    }

    const auto dir = output_dir(out);
    if (analyze_cmd->parsed()) {
        return guarded(dir, [&] {
            const auto [lo, hi] = parse_pair(band, "--band");
            cfg.network = network;
            cfg.w_min = lo;
            cfg.w_max = hi;
            cfg.modes = parse_modes(modes);
            cfg.out_dir = dir;
            const auto result = analyze(cfg);
            std::cout << result.modes.size() << " modes, " << result.selected.size() << " analysed; reports in "
                      << dir.string() << '\n';
        });
    }
    if (sweep_cmd->parsed())
        return guarded(dir, [&] { do_sweep(network, branch, param, factor, steps, seed, dir); });
    return guarded(dir, [&] { do_fit(samples, order, iterations, dir); });
}

// hqrng: command-line front end for the pipeline stages.
//
// Exit codes: 0 success, 2 validation error, 3 runtime/stage failure,
// 4 statistical-test failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hqrng.hpp"

using namespace hqrng;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitStatistical = 4;

struct Globals {
    std::string config_path;
    std::vector<std::string> overrides;

    PipelineConfig load() const {
        PipelineConfig cfg;
        if (!config_path.empty()) {
            try {
                cfg.apply(KeyValueDoc::load(config_path));
            } catch (const StageError& e) {
                throw ValidationError(std::string("--config: ") + e.what());
            }
        }
        KeyValueDoc kv;
        for (const auto& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + o + "'");
            kv.set(o.substr(0, eq), o.substr(eq + 1));
        }
        cfg.apply(kv);
        return cfg;
    }
};

void print(const KeyValueDoc& kv) { std::cout << kv.str() << std::flush; }

char channel_of(const std::string& s) {
    if (s != "i" && s != "q") throw ValidationError("--channel must be i or q");
    return s[0];
}

std::pair<double, double> code_variances(const std::string& path) {
    qrb1::Reader r(path);
    const double lsb = r.header().adc().lsb();
    double si = 0, si2 = 0, sq = 0, sq2 = 0;
    std::uint64_t n = 0;
    while (r.remaining()) {
        const auto b = r.read(std::size_t{1} << 20);
        for (std::size_t t = 0; t < b.size(); ++t) {
            const double i = b.codes_i[t] * lsb, q = b.codes_q[t] * lsb;
            si += i;
            si2 += i * i;
            sq += q;
            sq2 += q * q;
        }
        n += b.size();
    }
    const auto nd = static_cast<double>(n);
    if (n < 2) return {0.0, 0.0};
    return {(si2 - si * si / nd) / (nd - 1), (sq2 - sq * sq / nd) / (nd - 1)};
}

int report_battery(const RetestOutcome& out) {
    std::cout << out.first.table();
    if (out.retest) {
        std::cout << "one test failed; retest on a fresh block:\n" << out.retest->table();
    }
    std::cout << (out.passed() ? "battery: PASSED\n" : "battery: FAILED\n");
    return out.passed() ? 0 : kExitStatistical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterodyne QRNG simulation and security-bound toolchain"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("-c,--config", g.config_path, "key=value configuration file");
    app.add_option("-s,--set", g.overrides, "override one configuration key (key=value); repeatable")
        ->allow_extra_args(false);

    int status = 0;

    // simulate
    auto* sim = app.add_subcommand("simulate", "simulate raw ADC codes into a QRB1 file")->fallthrough();
    std::string sim_out = "raw.qrb1";
    bool sim_lo_off = false;
    sim->add_option("-o,--out", sim_out, "output QRB1 file");
    sim->add_flag("--lo-off", sim_lo_off, "record electronic noise only (LO blocked), sim.samples samples");
    sim->callback([&] {
        const auto cfg = g.load();
        KeyValueDoc kv;
        if (sim_lo_off) {
            cfg.validate();
            simulate_lo_off(cfg, static_cast<std::size_t>(cfg.sim_samples), sim_out);
            kv.set("simulate.samples", static_cast<unsigned long long>(cfg.sim_samples));
            kv.set("simulate.lo_off", true);
        } else {
            kv = simulate_stage(cfg, sim_out).to_kv();
        }
        const auto [vi, vq] = code_variances(sim_out);
        kv.set("simulate.variance_i", vi);
        kv.set("simulate.variance_q", vq);
        kv.set("simulate.output", sim_out);
        print(kv);
    });

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "sweep LO power, fit the detector lines")->fallthrough();
    std::vector<double> powers;
    std::size_t cal_points = 20, cal_samples = 1000000;
    double p_min = 0.01e-3, p_max = 4.05e-3;
    std::uint64_t cal_seed = 7;
    std::string cal_out = "calibration.kv";
    cal->add_option("--powers", powers, "explicit LO powers in W (comma separated)")->delimiter(',');
    cal->add_option("--points", cal_points, "number of evenly spaced powers");
    cal->add_option("--p-min", p_min, "lowest LO power, W");
    cal->add_option("--p-max", p_max, "highest LO power, W");
    cal->add_option("--samples", cal_samples, "samples per power");
    cal->add_option("--seed", cal_seed, "simulation seed");
    cal->add_option("-o,--out", cal_out, "calibration report file");
    cal->callback([&] {
        const auto cfg = g.load();
        if (powers.empty()) powers = linear_powers(cal_points, p_min, p_max);
        if (powers.size() < 3) throw ValidationError("calibration needs at least 3 powers");
        const auto pts = run_calibration_sweep(cfg.calibration, powers, cal_samples, cfg.adc, cal_seed);
        const auto fit = fit_calibration_detailed(pts);
        KeyValueDoc kv;
        kv.comment("detector calibration: variance [V^2] = m * P [W] + q");
        kv.merge(fit.calibration.to_kv());
        for (int ch = 1; ch <= 2; ++ch) {
            const auto& f = ch == 1 ? fit.channel_1 : fit.channel_2;
            const std::string pre = "fit.ch" + std::to_string(ch) + ".";
            kv.set(pre + "rms_residual", f.rms_residual);
            kv.set(pre + "max_abs_residual", f.max_abs_residual);
            kv.set(pre + "relative_rms_residual", f.rms_residual / (f.slope * p_max));
        }
        kv.set("fit.points", pts.size());
        kv.set("fit.samples_per_point", cal_samples);
        for (std::size_t k = 0; k < pts.size(); ++k) {
            const std::string pre = "point." + std::to_string(k) + ".";
            kv.set(pre + "power", pts[k].power);
            kv.set(pre + "variance_1", pts[k].variance_1);
            kv.set(pre + "variance_2", pts[k].variance_2);
        }
        kv.save(cal_out);
        print(kv);
    });

    // entropy
    auto* ent = app.add_subcommand("entropy", "entropy certificate from resolutions or a QRB1 file")->fallthrough();
    std::optional<double> dq, dp, delta, var_q, var_p, rate, eps;
    std::string ent_in, ent_out;
    ent->add_option("--in", ent_in, "QRB1 file (resolutions from the header and calibration)");
    ent->add_option("--delta", delta, "phase-space resolution for both quadratures");
    ent->add_option("--delta-q", dq, "resolution of q");
    ent->add_option("--delta-p", dp, "resolution of p");
    ent->add_option("--var-q", var_q, "variance of q (vacuum units)");
    ent->add_option("--var-p", var_p, "variance of p (vacuum units)");
    ent->add_option("--rate", rate, "samples per second");
    ent->add_option("--epsilon", eps, "security parameter (default: extract.epsilon)");
    ent->add_option("-o,--out", ent_out, "certificate file");
    ent->callback([&] {
        const auto cfg = g.load();
        EntropyCertificate c;
        if (!ent_in.empty()) {
            auto tmp = cfg;
            if (eps) tmp.epsilon = *eps;
            c = entropy_stage(tmp, ent_in);
        } else {
            const auto q = dq ? dq : delta;
            const auto p = dp ? dp : delta;
            if (!q || !p) throw ValidationError("give --in, or --delta / --delta-q and --delta-p");
            if (var_q.has_value() != var_p.has_value()) throw ValidationError("give both --var-q and --var-p");
            c = build_certificate(*q, *p, var_q, var_p, rate.value_or(cfg.output_rate()), eps.value_or(cfg.epsilon));
        }
        const auto kv = c.to_kv();
        if (!ent_out.empty()) kv.save(ent_out);
        print(kv);
    });

    // filter
    auto* fil = app.add_subcommand("filter", "band-limit, decimate and requantize a QRB1 file")->fallthrough();
    std::string fil_in = "raw.qrb1", fil_out = "filtered.qrb1";
    fil->add_option("--in", fil_in, "input QRB1 file");
    fil->add_option("-o,--out", fil_out, "output QRB1 file");
    fil->callback([&] { print(filter_stage(g.load(), fil_in, fil_out).to_kv()); });

    // autocorr
    auto* ac = app.add_subcommand("autocorr", "autocorrelation of one channel as two-column text")->fallthrough();
    std::string ac_in, ac_out = "autocorr.txt", ac_ch = "i";
    std::optional<std::size_t> ac_lag, ac_samples;
    ac->add_option("--in", ac_in, "QRB1 file")->required();
    ac->add_option("-o,--out", ac_out, "output text file");
    ac->add_option("--max-lag", ac_lag, "largest lag (default: autocorr.max_lag)");
    ac->add_option("--samples", ac_samples, "samples used (default: autocorr.samples)");
    ac->add_option("--channel", ac_ch, "i or q");
    ac->callback([&] {
        const auto cfg = g.load();
        const auto s = autocorr_file(ac_in, ac_lag.value_or(cfg.autocorr_max_lag),
                                     ac_samples.value_or(cfg.autocorr_samples), channel_of(ac_ch));
        std::vector<double> lags(s.r.size());
        for (std::size_t k = 0; k < lags.size(); ++k) lags[k] = static_cast<double>(k);
        write_two_column(ac_out, lags, s.r,
                         {"lag r(lag)", "samples = " + std::to_string(s.samples),
                          "threshold = " + format_double(s.threshold), "max_abs = " + format_double(s.max_abs),
                          "worst_lag = " + std::to_string(s.worst_lag),
                          std::string("flagged = ") + (s.flagged() ? "true" : "false")});
        KeyValueDoc kv;
        kv.set("autocorr.samples", s.samples);
        kv.set("autocorr.threshold", s.threshold);
        kv.set("autocorr.max_abs", s.max_abs);
        kv.set("autocorr.worst_lag", s.worst_lag);
        kv.set("autocorr.flagged", s.flagged());
        print(kv);
    });

    // spectrum
    auto* sp = app.add_subcommand("spectrum", "Welch power spectral density as two-column text")->fallthrough();
    std::string sp_in, sp_off, sp_out = "spectrum.txt", sp_ch = "i";
    std::size_t sp_seg = 4096, sp_samples = 64 * 4096;
    double sp_overlap = 0.5;
    sp->add_option("--in", sp_in, "QRB1 file")->required();
    sp->add_option("--off", sp_off, "LO-off QRB1 file; adds the in-band clearance line");
    sp->add_option("-o,--out", sp_out, "output text file");
    sp->add_option("--segment", sp_seg, "Welch segment length");
    sp->add_option("--overlap", sp_overlap, "segment overlap fraction");
    sp->add_option("--samples", sp_samples, "samples used");
    sp->add_option("--channel", sp_ch, "i or q");
    sp->callback([&] {
        const auto cfg = g.load();
        const auto on = psd_file(sp_in, sp_seg, sp_overlap, sp_samples, channel_of(sp_ch));
        std::vector<std::string> header = {"frequency_hz psd_v2_per_hz"};
        if (!sp_off.empty()) {
            const auto off = psd_file(sp_off, sp_seg, sp_overlap, sp_samples, channel_of(sp_ch));
            const double gap = band_gap_db(on, off, cfg.band);
            header.push_back("band_gap_db = " + format_double(gap));
            std::cout << "band_gap_db = " << format_double(gap) << "\n";
        }
        write_two_column(sp_out, on.frequencies, on.power, header);
        std::cout << "spectrum.points = " << on.frequencies.size() << "\n";
    });

    // extract
    auto* ex = app.add_subcommand("extract", "Toeplitz extraction at the certified length")->fallthrough();
    std::string ex_in = "filtered.qrb1", ex_out = "bits.bin";
    ex->add_option("--in", ex_in, "input QRB1 file");
    ex->add_option("-o,--out", ex_out, "packed output bits (sidecar written to OUT.kv)");
    ex->callback([&] {
        const auto sum = extract_stage(g.load(), ex_in, ex_out);
        KeyValueDoc kv;
        kv.merge(sum.certificate.to_kv(), "cert.");
        kv.set("extract.blocks", static_cast<unsigned long long>(sum.blocks));
        kv.set("extract.input_bits", static_cast<unsigned long long>(sum.input_bits));
        kv.set("extract.output_bits", static_cast<unsigned long long>(sum.output_bits));
        kv.set("extract.ratio", sum.ratio());
        kv.set("extract.dropped_samples", static_cast<unsigned long long>(sum.dropped_samples));
        print(kv);
    });

    // test
    auto* te = app.add_subcommand("test", "statistical battery on packed bits")->fallthrough();
    std::string te_in = "bits.bin";
    std::optional<std::uint64_t> te_bits;
    std::optional<double> te_alpha;
    te->add_option("--in", te_in, "packed bit file");
    te->add_option("--bits", te_bits, "bits per battery run (default: test.bits, 0 = whole file)");
    te->add_option("--alpha", te_alpha, "significance level (default: test.alpha)");
    te->callback([&] {
        const auto cfg = g.load();
        status = report_battery(test_stage(te_in, te_bits.value_or(cfg.test_bits), te_alpha.value_or(cfg.test_alpha)));
    });

    // run
    auto* run = app.add_subcommand("run", "all stages through files in a directory")->fallthrough();
    std::string run_dir = "run";
    run->add_option("-d,--dir", run_dir, "working directory (created if missing)");
    run->callback([&] {
        const auto cfg = g.load();
        cfg.validate();
        std::filesystem::create_directories(run_dir);
        const auto rep = run_pipeline(cfg, run_dir);
        print(rep.to_kv());
        status = rep.battery.passed() ? 0 : kExitStatistical;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const StatisticalFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStatistical;
    } catch (const StageError& e) {
        std::cerr << "error in stage " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return status;
}

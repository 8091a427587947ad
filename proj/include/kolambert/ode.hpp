#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "kolambert/errors.hpp"

namespace kolambert {

using OdeRhs = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

enum class IntegratorMethod {
    adaptive_rk,           // Fehlberg 7(8), adaptive step
    multistep_pece,        // Adams-Bashforth-Moulton PECE, fixed step
};

struct IntegratorConfig {
    IntegratorMethod method = IntegratorMethod::adaptive_rk;
    double rel_tolerance = 1e-13;
    double abs_tolerance = 1e-13;
    double max_step = 0.0;  // 0 -> unrestricted (span/8 for the multistep start)
    std::function<bool()> cancelled;  // polled between steps of long integrations

    void validate() const {
        if (!(rel_tolerance > 0) || rel_tolerance > 1e-3)
            throw ArgumentError("IntegratorConfig: rel_tolerance must lie in (0, 1e-3]");
        if (!(abs_tolerance > 0) || abs_tolerance > 1e-3)
            throw ArgumentError("IntegratorConfig: abs_tolerance must lie in (0, 1e-3]");
    }
};

namespace detail {

// Fehlberg 7(8) coefficients (13 stages).
struct Rkf78Tableau {
    static constexpr int stages = 13;
    double a[13] = {0.0,       2.0 / 27,  1.0 / 9,  1.0 / 6,  5.0 / 12, 0.5,     5.0 / 6,
                    1.0 / 6,   2.0 / 3,   1.0 / 3,  1.0,      0.0,      1.0};
    double b[13][12] = {};
    double c7[13] = {};  // 7th order weights
    double c8[13] = {};  // 8th order weights

    Rkf78Tableau() {
        auto& B = b;
        B[1][0] = 2.0 / 27;
        B[2][0] = 1.0 / 36; B[2][1] = 1.0 / 12;
        B[3][0] = 1.0 / 24; B[3][2] = 1.0 / 8;
        B[4][0] = 5.0 / 12; B[4][2] = -25.0 / 16; B[4][3] = 25.0 / 16;
        B[5][0] = 1.0 / 20; B[5][3] = 0.25; B[5][4] = 0.2;
        B[6][0] = -25.0 / 108; B[6][3] = 125.0 / 108; B[6][4] = -65.0 / 27; B[6][5] = 125.0 / 54;
        B[7][0] = 31.0 / 300; B[7][4] = 61.0 / 225; B[7][5] = -2.0 / 9; B[7][6] = 13.0 / 900;
        B[8][0] = 2.0; B[8][3] = -53.0 / 6; B[8][4] = 704.0 / 45; B[8][5] = -107.0 / 9;
        B[8][6] = 67.0 / 90; B[8][7] = 3.0;
        B[9][0] = -91.0 / 108; B[9][3] = 23.0 / 108; B[9][4] = -976.0 / 135; B[9][5] = 311.0 / 54;
        B[9][6] = -19.0 / 60; B[9][7] = 17.0 / 6; B[9][8] = -1.0 / 12;
        B[10][0] = 2383.0 / 4100; B[10][3] = -341.0 / 164; B[10][4] = 4496.0 / 1025;
        B[10][5] = -301.0 / 82; B[10][6] = 2133.0 / 4100; B[10][7] = 45.0 / 82;
        B[10][8] = 45.0 / 164; B[10][9] = 18.0 / 41;
        B[11][0] = 3.0 / 205; B[11][5] = -6.0 / 41; B[11][6] = -3.0 / 205; B[11][7] = -3.0 / 41;
        B[11][8] = 3.0 / 41; B[11][9] = 6.0 / 41;
        B[12][0] = -1777.0 / 4100; B[12][3] = -341.0 / 164; B[12][4] = 4496.0 / 1025;
        B[12][5] = -289.0 / 82; B[12][6] = 2193.0 / 4100; B[12][7] = 51.0 / 82;
        B[12][8] = 33.0 / 164; B[12][9] = 12.0 / 41; B[12][11] = 1.0;

        c7[0] = 41.0 / 840; c7[5] = 34.0 / 105; c7[6] = 9.0 / 35; c7[7] = 9.0 / 35;
        c7[8] = 9.0 / 280; c7[9] = 9.0 / 280; c7[10] = 41.0 / 840;
        c8[5] = 34.0 / 105; c8[6] = 9.0 / 35; c8[7] = 9.0 / 35; c8[8] = 9.0 / 280;
        c8[9] = 9.0 / 280; c8[11] = 41.0 / 840; c8[12] = 41.0 / 840;
    }
};

inline const Rkf78Tableau& rkf78_tableau() {
    static const Rkf78Tableau t;
    return t;
}

}  // namespace detail

// Integrates y' = f(t, y) from t0 to t1 with the Fehlberg 7(8) pair, calling
// observe(t, y) after every accepted step (and at t0).
inline Eigen::VectorXd integrate_rkf78(
    const OdeRhs& f, double t0, double t1, Eigen::VectorXd y, const IntegratorConfig& cfg,
    const std::function<void(double, const Eigen::VectorXd&)>& observe = nullptr) {
    cfg.validate();
    const auto& tab = detail::rkf78_tableau();
    const double span = t1 - t0;
    if (span == 0.0) {
        if (observe) observe(t0, y);
        return y;
    }
    const double dir = span > 0 ? 1.0 : -1.0;
    double h = std::abs(span) / 64.0;
    if (cfg.max_step > 0) h = std::min(h, cfg.max_step);
    h *= dir;
    double t = t0;
    if (observe) observe(t, y);
    std::vector<Eigen::VectorXd> k(detail::Rkf78Tableau::stages);
    long steps = 0;
    while (dir * (t1 - t) > 0) {
        if (dir * (t + h - t1) > 0) h = t1 - t;
        // stages
        k[0] = f(t, y);
        for (int s = 1; s < detail::Rkf78Tableau::stages; ++s) {
            Eigen::VectorXd ys = y;
            for (int j = 0; j < s; ++j)
                if (tab.b[s][j] != 0.0) ys += h * tab.b[s][j] * k[static_cast<std::size_t>(j)];
            k[static_cast<std::size_t>(s)] = f(t + tab.a[s] * h, ys);
        }
        Eigen::VectorXd y7 = y, y8 = y;
        for (int s = 0; s < detail::Rkf78Tableau::stages; ++s) {
            if (tab.c7[s] != 0.0) y7 += h * tab.c7[s] * k[static_cast<std::size_t>(s)];
            if (tab.c8[s] != 0.0) y8 += h * tab.c8[s] * k[static_cast<std::size_t>(s)];
        }
        double err = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            const double scale =
                cfg.abs_tolerance +
                cfg.rel_tolerance * std::max(std::abs(y[i]), std::abs(y8[i]));
            err = std::max(err, std::abs(y8[i] - y7[i]) / scale);
        }
        if (err <= 1.0 || std::abs(h) <= 1e-14 * std::abs(span)) {
            t += h;
            y = y8;
            if (observe) observe(t, y);
        }
        double factor = err > 0 ? 0.9 * std::pow(err, -1.0 / 8.0) : 4.0;
        factor = std::clamp(factor, 0.2, 4.0);
        h *= factor;
        if (cfg.max_step > 0 && std::abs(h) > cfg.max_step) h = dir * cfg.max_step;
        if (std::abs(h) < 1e-15 * std::abs(span))
            throw IntegrationError("integrate_rkf78: step size collapsed at t = " + std::to_string(t));
        if (++steps > 50'000'000)
            throw IntegrationError("integrate_rkf78: step budget exhausted at t = " + std::to_string(t));
        if ((steps & 63) == 0 && cfg.cancelled && cfg.cancelled())
            throw IntegrationError("integrate_rkf78: cancelled at t = " + std::to_string(t));
    }
    return y;
}

// Fixed-step Adams-Bashforth-Moulton PECE of order 8, started with RKF78.
inline Eigen::VectorXd integrate_abm8(
    const OdeRhs& f, double t0, double t1, Eigen::VectorXd y, const IntegratorConfig& cfg,
    const std::function<void(double, const Eigen::VectorXd&)>& observe = nullptr) {
    cfg.validate();
    const double span = t1 - t0;
    if (span == 0.0) {
        if (observe) observe(t0, y);
        return y;
    }
    // choose a fixed step from max_step / tolerance heuristics
    double h = cfg.max_step > 0 ? cfg.max_step : std::abs(span) / 2000.0;
    long n = std::max<long>(8, static_cast<long>(std::ceil(std::abs(span) / h)));
    h = span / static_cast<double>(n);

    static const double ab[8] = {434241.0 / 120960, -1152169.0 / 120960, 2183877.0 / 120960,
                                 -2664477.0 / 120960, 2102243.0 / 120960, -1041723.0 / 120960,
                                 295767.0 / 120960, -36799.0 / 120960};
    static const double am[8] = {36799.0 / 120960, 139849.0 / 120960, -121797.0 / 120960,
                                 123133.0 / 120960, -88547.0 / 120960, 41499.0 / 120960,
                                 -11351.0 / 120960, 1375.0 / 120960};

    std::deque<Eigen::VectorXd> hist;  // f values, most recent in front
    if (observe) observe(t0, y);
    IntegratorConfig startup = cfg;
    startup.max_step = 0.0;
    double t = t0;
    hist.push_front(f(t, y));
    for (int i = 1; i < 8 && i <= n; ++i) {
        y = integrate_rkf78(f, t, t0 + i * h, y, startup);
        t = t0 + i * h;
        hist.push_front(f(t, y));
        if (observe) observe(t, y);
    }
    for (long i = 8; i <= n; ++i) {
        Eigen::VectorXd pred = y;
        for (int j = 0; j < 8; ++j) pred += h * ab[j] * hist[static_cast<std::size_t>(j)];
        const double tn = t0 + i * h;
        Eigen::VectorXd fp = f(tn, pred);  // evaluate
        Eigen::VectorXd corr = y;
        corr += h * am[0] * fp;
        for (int j = 1; j < 8; ++j) corr += h * am[j] * hist[static_cast<std::size_t>(j - 1)];
        y = corr;
        hist.push_front(f(tn, y));  // final evaluate
        hist.pop_back();
        t = tn;
        if (observe) observe(t, y);
    }
    return y;
}

inline Eigen::VectorXd integrate(const OdeRhs& f, double t0, double t1, Eigen::VectorXd y,
                                 const IntegratorConfig& cfg,
                                 const std::function<void(double, const Eigen::VectorXd&)>& observe = nullptr) {
    switch (cfg.method) {
        case IntegratorMethod::adaptive_rk:
            return integrate_rkf78(f, t0, t1, std::move(y), cfg, observe);
        case IntegratorMethod::multistep_pece:
            return integrate_abm8(f, t0, t1, std::move(y), cfg, observe);
    }
    throw ArgumentError("integrate: unknown method");
}

}  // namespace kolambert

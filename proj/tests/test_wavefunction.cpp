#include "doctest.h"
#include "helpers.hpp"

#include "heg/errors.hpp"

#include <cmath>

using namespace heg;
using namespace heg::testing;

namespace {

LogAmplitude shifted(const Wavefunction& wf, ParticleConfiguration x, int i, int a, double h) {
    Positions p = x.positions();
    p(i, a) += h;
    x.set_positions(p);
    return wf.log_psi(x);
}

}  // namespace

TEST_CASE("coordinate gradient and Laplacian match finite differences") {
    const SimulationCell cell(3, 3, 1.5);
    for (int draw = 0; draw < 3; ++draw) {
        const Wavefunction wf = plane_wave_psi(cell, 1 + draw % 2, 100 + draw);
        for (int c = 0; c < 3; ++c) {
            const auto x = random_config(cell, 17 * draw + c);
            const auto d = wf.derivatives(x, false);
            const auto base = wf.log_psi(x);
            const double h = 1e-5, h2 = 4e-4;
            cd lap_coarse = 0.0, lap_fine = 0.0;
            for (int i = 0; i < x.size(); ++i)
                for (int a = 0; a < 3; ++a) {
                    const cd fd = log_diff(shifted(wf, x, i, a, h), shifted(wf, x, i, a, -h)) / (2 * h);
                    CHECK(std::abs(fd - d.grad_log(i, a)) < 1e-6 * std::max(1.0, std::abs(fd)));
                    lap_coarse += (log_diff(shifted(wf, x, i, a, h2), base) + log_diff(shifted(wf, x, i, a, -h2), base)) /
                                  (h2 * h2);
                    const double hf = h2 / 2;
                    lap_fine += (log_diff(shifted(wf, x, i, a, hf), base) + log_diff(shifted(wf, x, i, a, -hf), base)) /
                                (hf * hf);
                }
            // Richardson extrapolation removes the O(h^2) stencil error
            const cd lap_fd = (4.0 * lap_fine - lap_coarse) / 3.0;
            CHECK(std::abs(lap_fd - d.laplacian_log) < 1e-5 * std::max(1.0, std::abs(lap_fd)));
        }
    }
}

TEST_CASE("parameter log-derivatives match finite differences") {
    const SimulationCell cell(1, 1, 2.0);
    Wavefunction wf = gaussian_psi(cell, 2, 7);
    const auto x = random_config(cell, 3);
    const auto d = wf.derivatives(x, true);
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t p = 0; p < wf.num_parameters(); ++p) {
        const double v0 = wf.params().values()[static_cast<Eigen::Index>(p)];
        wf.params().values()[static_cast<Eigen::Index>(p)] = v0 + h;
        const auto up = wf.log_psi(x);
        wf.params().values()[static_cast<Eigen::Index>(p)] = v0 - h;
        const auto dn = wf.log_psi(x);
        wf.params().values()[static_cast<Eigen::Index>(p)] = v0;
        const cd fd = log_diff(up, dn) / (2 * h);
        const cd an = d.param_log_derivs[static_cast<Eigen::Index>(p)];
        worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
    }
    CHECK(worst < 1e-6);
}

#pragma once

#include "ldl/model.hpp"

namespace ldl::testing {

inline Portfolio one_bank(double a0 = 100.0, double l0 = 40.0, double sigma = 0.2, JumpSpec jumps = NoJumps{}) {
    Portfolio p;
    p.banks = {BankSpec{a0, l0, 1.0, sigma, {}}};
    p.liabilities = {{0.0}};
    p.corr.rho = {{1.0}};
    p.corr.loadings = {0.0};
    p.idio = {jumps};
    p.rate = RateCurve::constant(0.05);
    return p;
}

inline Portfolio tab1(bool jumps = true) {
    Portfolio p;
    p.banks = {BankSpec{110, 80, 0.4, 0.2, {}}, BankSpec{100, 85, 0.35, 0.3, {}}};
    p.liabilities = {{0, 10}, {15, 0}};
    p.corr.rho = {{1, 0.5}, {0.5, 1}};
    p.corr.loadings = {0.2, 0.3};
    p.rate = RateCurve::constant(0.05);
    if (jumps) {
        p.corr.common = KouJumps{3, 0.3445, 3.0465, 3.0775};
        p.idio = {MertonJumps{3, 0.5, 0.3}, MertonJumps{3, 0.3, 0.4}};
    } else {
        p.idio = {NoJumps{}, NoJumps{}};
    }
    return p;
}

inline Portfolio tab3d() {
    Portfolio p;
    p.banks = {BankSpec{110, 80, 0.4, 0.2, {}}, BankSpec{100, 90, 0.35, 0.3, {}}, BankSpec{120, 100, 0.5, 0.25, {}}};
    p.liabilities = {{0, 20, 15}, {15, 0, 10}, {20, 15, 0}};
    const double xy = correlation_cosine_law(0.3, 0.5, 0.4 * 3.14159265358979323846);
    p.corr.rho = {{1, xy, 0.5}, {xy, 1, 0.3}, {0.5, 0.3, 1}};
    p.corr.loadings = {0.2, 0.3, 0.25};
    p.corr.common = KouJumps{3, 0.3445, 3.0465, 3.0775};
    p.idio = {MertonJumps{3, 0.5, 0.3}, MertonJumps{3, 0.3, 0.4}, MertonJumps{3, 0.4, 0.5}};
    p.rate = RateCurve::constant(0.05);
    return p;
}

}  // namespace ldl::testing

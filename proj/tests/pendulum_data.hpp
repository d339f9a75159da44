#pragma once

// Rotary inverted pendulum benchmark data (linearized upper position) and the
// published reference gains used as cross-check targets.

#include "homobs/matrix.hpp"

namespace pendulum {

inline homobs::Matrix A() {
    return {{0.0, 0.0, 1.0, 0.0},
            {0.0, 0.0, 0.0, 1.0},
            {0.0, 152.0057, -12.2542, -0.5005},
            {0.0, 264.3080, -12.1117, -0.8702}};
}

inline homobs::Matrix B() { return {{0.0}, {0.0}, {50.6372}, {50.0484}}; }

inline homobs::Matrix C() { return {{1.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}}; }

inline homobs::Matrix L0_ref() {
    return {{12.2542, 0.5005},
            {12.1117, 0.8702},
            {-156.227, -158.574},
            {-158.959, -271.127}};
}

inline homobs::Matrix Gd_ref() {
    return {{2.0 / 3.0, 0.0, 0.0, 0.0},
            {0.0, 2.0 / 3.0, 0.0, 0.0},
            {-4.0847, -0.1668, 1.0 / 3.0, 0.0},
            {-4.0372, -0.2901, 0.0, 1.0 / 3.0}};
}

inline homobs::Matrix L_tilde_ref() { return {{-13.9248, 0.0}, {0.0, -13.9248}}; }

inline homobs::Matrix L_ref() {
    return {{-90.01293, 0.0},
            {0.0, -90.01293},
            {969.1348, 45.0500},
            {1090.210, -55.5684}};
}

inline homobs::Matrix L_lin() {
    return {{-10.9008, 0.5005},
            {12.1117, -22.0156},
            {34.0122, -147.1205},
            {121.4870, -343.9178}};
}

inline homobs::Matrix feedback_gain() { return {{2.0, -35.0, 1.5, -3.0}}; }

inline homobs::Vector x0() { return {2.0, 2.0, 1.0, 2.0}; }

}  // namespace pendulum

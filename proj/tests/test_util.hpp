#pragma once

#include <cstdint>

#include "drlora/matrix.hpp"
#include "drlora/rng.hpp"

namespace testutil {

inline drlora::Matrix random_matrix(std::size_t rows, std::size_t cols, drlora::Rng& rng,
                                    double scale = 1.0) {
    drlora::Matrix m(rows, cols);
    for (double& v : m.data()) v = scale * (2.0 * rng.next_double() - 1.0);
    return m;
}

}  // namespace testutil

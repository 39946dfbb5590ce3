#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace graphwalk {

using Real = double;
using Index = std::int64_t;

/// Integer voxel/sample dimensions of one lattice layer.
struct GridDims {
    Index x = 0, y = 0, z = 0;

    Index count() const { return x * y * z; }
    bool operator==(const GridDims&) const = default;
};

inline Index linear_index(const GridDims& d, Index ix, Index iy, Index iz) {
    return ix + d.x * (iy + d.y * iz);
}

struct Coord3 {
    Index x = 0, y = 0, z = 0;
    bool operator==(const Coord3&) const = default;
};

inline Coord3 delinearize(const GridDims& d, Index j) {
    Coord3 c;
    c.x = j % d.x;
    c.y = (j / d.x) % d.y;
    c.z = j / (d.x * d.y);
    return c;
}

inline bool in_bounds(const GridDims& d, Index ix, Index iy, Index iz) {
    return ix >= 0 && iy >= 0 && iz >= 0 && ix < d.x && iy < d.y && iz < d.z;
}

// ---------------------------------------------------------------------------
// Error taxonomy. Every throw site uses one of these so the CLI can emit a
// structured JSON error with a stable "type" string.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    Error(std::string type, const std::string& message)
        : std::runtime_error(message), type_(std::move(type)) {}
    const std::string& type() const { return type_; }

private:
    std::string type_;
};

class InvalidInputError : public Error {
public:
    explicit InvalidInputError(const std::string& m) : Error("invalid-input", m) {}
};

/// Singular system; carries the vertex ids of one disconnected component.
class SingularityError : public Error {
public:
    SingularityError(const std::string& m, std::vector<Index> component)
        : Error("singularity", m), component_(std::move(component)) {}
    const std::vector<Index>& component() const { return component_; }

private:
    std::vector<Index> component_;
};

/// Iterative solve did not reach tolerance; carries the best iterate.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& m, std::vector<Real> best_iterate, Real residual)
        : Error("convergence-failure", m),
          best_iterate_(std::move(best_iterate)),
          residual_(residual) {}
    const std::vector<Real>& best_iterate() const { return best_iterate_; }
    Real residual() const { return residual_; }

private:
    std::vector<Real> best_iterate_;
    Real residual_;
};

class OutOfHierarchyError : public Error {
public:
    explicit OutOfHierarchyError(const std::string& m) : Error("out-of-hierarchy", m) {}
};

class StructuralError : public Error {
public:
    explicit StructuralError(const std::string& m) : Error("structural", m) {}
};

/// Curvature histogram did not expose two separated peaks; carries a CSV dump.
class PopulationDetectionError : public Error {
public:
    PopulationDetectionError(const std::string& m, std::string histogram_csv)
        : Error("population-detection", m), histogram_csv_(std::move(histogram_csv)) {}
    const std::string& histogram_csv() const { return histogram_csv_; }

private:
    std::string histogram_csv_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& m) : Error("io", m) {}
};

// ---------------------------------------------------------------------------
// Small numeric helpers shared across modules.
// ---------------------------------------------------------------------------

/// Median with midpoint convention for even counts. Copies its input.
inline Real median(std::vector<Real> v) {
    if (v.empty()) throw InvalidInputError("median of empty set");
    const size_t n = v.size();
    const size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    Real hi = v[mid];
    if (n % 2 == 1) return hi;
    Real lo = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lo + hi);
}

/// Nearest-rank quantile (index ceil(q*n)-1, clamped) of a copied sample.
inline Real quantile_nearest_rank(std::vector<Real> v, Real q) {
    if (v.empty()) throw InvalidInputError("quantile of empty set");
    if (!(q >= 0.0 && q <= 1.0)) throw InvalidInputError("quantile order outside [0,1]");
    std::sort(v.begin(), v.end());
    auto idx = static_cast<std::ptrdiff_t>(std::ceil(q * static_cast<Real>(v.size()))) - 1;
    idx = std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(v.size()) - 1);
    return v[static_cast<size_t>(idx)];
}

inline std::string format_dims(const GridDims& d) {
    std::ostringstream os;
    os << d.x << "x" << d.y << "x" << d.z;
    return os.str();
}

} // namespace graphwalk

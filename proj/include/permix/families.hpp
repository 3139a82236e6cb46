#ifndef PERMIX_FAMILIES_HPP
#define PERMIX_FAMILIES_HPP

#include <cstddef>
#include <vector>

#include "permix/errors.hpp"
#include "permix/rng.hpp"

namespace permix {

enum class ModelKind {
    gaussian_loc,       // N(mean, 1)
    poisson,            // Poi(rate), rate >= 0
    discrete,           // finite pmf over categories 0..K-1
    gaussian_scale,     // N(0, sigma^2), sigma > 0
    gaussian_loc_multi, // N(mean_vec, I_d)
};

// One distribution from a parametric family. Immutable value object; factories
// validate parameters so an existing Member is always well-formed.
class Member {
public:
    static Member gaussian_loc(double mean);
    static Member poisson(double rate);
    static Member discrete(std::vector<double> pmf);
    static Member gaussian_scale(double sigma);
    static Member gaussian_loc_multi(std::vector<double> mean);

    ModelKind kind() const { return kind_; }

    double mean() const;
    double rate() const;
    const std::vector<double>& pmf() const;
    double sigma() const;
    const std::vector<double>& mean_vec() const;

    friend bool operator==(const Member&, const Member&) = default;

private:
    Member(ModelKind kind, double scalar, std::vector<double> vec)
        : kind_(kind), scalar_(scalar), vec_(std::move(vec)) {}

    ModelKind kind_;
    double scalar_;            // mean, rate, or sigma
    std::vector<double> vec_;  // pmf or multivariate mean
};

// Observation convention: a single double. Continuous models use it directly;
// Poisson and Discrete require an integral value (count, category index).
using Observation = double;

double log_density(const Member& m, Observation x);
double density(const Member& m, Observation x);

// Renyi divergence of order 1/2 between two members of the same model kind.
// Closed forms throughout; +infinity for mutually singular discrete pairs.
double renyi_half(const Member& p, const Member& q);

// chi^2(P || Q) between two members of the same model kind. Divergent
// integrals return +infinity, never throw.
double chi2_pair(const Member& p, const Member& q);

Observation sample(const Member& m, RngStream& rng);

// Family of m-1 members over m shared categories: member i (i = 2..m) puts
// mass eps on category 1 and mass 1-eps on its own category i. Its overlap
// matrix is eps/(m-1) * J + (1-eps) * I.
std::vector<Member> shared_atom_members(std::size_t m, double eps);

// Two binary members with swapped category weights: (1-eps, eps) and
// (eps, 1-eps).
std::vector<Member> swap_pair_members(double eps);

// Seeded grid of `count` discrete members over m categories, each a random
// simplex point smoothed toward uniform: p = (1-eps) q + eps/m. Every density
// ratio against the uniform reference is at most m(1-eps) + eps.
std::vector<Member> simplex_grid_members(std::size_t m, double eps,
                                         std::size_t count, std::uint64_t seed);

} // namespace permix

#endif

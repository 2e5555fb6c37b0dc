#include "drgmm/rng.hpp"

namespace drgmm {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_key(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t rep) {
    return splitmix64(splitmix64(splitmix64(master_seed) ^ stream) ^ rep);
}

RepRng::RepRng(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t rep)
    : eng_(stream_key(master_seed, stream, rep)) {}

double RepRng::normal() { return nd_(eng_); }

VectorXd RepRng::normal_vector(Eigen::Index n) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = nd_(eng_);
    return v;
}

MatrixXd RepRng::normal_matrix(Eigen::Index r, Eigen::Index c) {
    MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = nd_(eng_);
    return m;
}

}  // namespace drgmm

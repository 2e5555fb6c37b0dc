#pragma once

#include <boost/random/normal_distribution.hpp>
#include <cstdint>
#include <random>

#include "drgmm/linalg.hpp"

namespace drgmm {

std::uint64_t splitmix64(std::uint64_t x);

// Key for replication `rep` of stream `stream` under `master_seed`; depends
// only on the triple, never on scheduling.
std::uint64_t stream_key(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t rep);

class RepRng {
public:
    RepRng(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t rep);
    double normal();
    VectorXd normal_vector(Eigen::Index n);
    MatrixXd normal_matrix(Eigen::Index r, Eigen::Index c);
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    boost::random::normal_distribution<double> nd_;
};

}  // namespace drgmm

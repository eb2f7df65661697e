#pragma once

#include <pchain/graphnet.hpp>
#include <pchain/rng.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace pchain {

using CommunityId = std::int32_t;
inline constexpr CommunityId unassigned = -1;

struct CommunityAssignment
{
    /// Community of each node, or `unassigned`.
    std::vector<CommunityId> membership;
    std::size_t k = 0;
    std::size_t supersteps = 0;
    bool converged = false;

    /// Member count per community id 0..k-1.
    std::vector<std::size_t> sizes() const;
};

/// 1 / |members|. Throws std::logic_error for an empty community.
double density(const CommunityAssignment& assignment, CommunityId community);

/// Candidate set of the update rule for v: the communities maximising
/// sum over w in {v} and its neighbours of d(c) * [c(w) == c].
/// Scores are compared exactly as fractions count/size. Empty when neither
/// v nor any neighbour is assigned.
std::vector<CommunityId> update_candidates(NodeIndex v, const CommunityAssignment& assignment, const Graph& g);

/// Keeps the current community when it is a candidate, otherwise samples a
/// candidate uniformly.
CommunityId update_rule(NodeIndex v, const CommunityAssignment& assignment, const Graph& g, RngStream& rng);

struct DetectOptions
{
    std::size_t max_supersteps = 100;
    /// Called at every superstep boundary.
    std::function<void(const CommunityAssignment&)> on_superstep;
    /// Called for every node visit with the assignment before the update and
    /// the community the rule picked.
    std::function<void(NodeIndex, const CommunityAssignment&, CommunityId)> on_decision;
    /// Called after every membership change with the stored densities.
    std::function<void(const CommunityAssignment&, const std::vector<double>&)> on_change;
};

/// Asynchronous fluid communities. Seeds k communities at k distinct random
/// nodes, then runs supersteps (random node order, densities updated after
/// each reassignment) until a superstep changes nothing or the cap is hit.
/// Throws std::invalid_argument for an empty graph or k outside [1, |V|].
CommunityAssignment detect_communities(const Graph& g, std::size_t k, RngStream& rng, const DetectOptions& options = {});

/// Members of the community with the most nodes; ties go to the lower id.
std::vector<NodeIndex> largest_community(const CommunityAssignment& assignment);

/// "node community" lines (unassigned nodes print -1) and a summary line
/// "k=<k> supersteps=<s> converged=<bool>".
void write_assignment(std::ostream& out, const CommunityAssignment& assignment);

} // namespace pchain

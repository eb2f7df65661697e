#pragma once

#include <pchain/rng.hpp>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace pchain {

using NodeIndex = std::uint32_t;

/// Simple undirected graph over nodes 0..n-1. No self loops, no parallel
/// edges. Neighbour lists are kept sorted.
class Graph
{
public:
    explicit Graph(std::size_t n = 0);

    std::size_t node_count() const { return adjacency_.size(); }
    std::size_t edge_count() const { return edge_count_; }

    /// Returns false if the edge already existed. Throws
    /// std::invalid_argument on a self loop or an unknown node.
    bool add_edge(NodeIndex a, NodeIndex b);
    bool remove_edge(NodeIndex a, NodeIndex b);
    bool has_edge(NodeIndex a, NodeIndex b) const;

    std::span<const NodeIndex> neighbors(NodeIndex v) const { return adjacency_.at(v); }
    std::size_t degree(NodeIndex v) const { return adjacency_.at(v).size(); }

    /// All edges as (u, v) with u < v, sorted.
    std::vector<std::pair<NodeIndex, NodeIndex>> edges() const;

    bool operator==(const Graph&) const = default;

private:
    void check_node(NodeIndex v) const;

    std::vector<std::vector<NodeIndex>> adjacency_;
    std::size_t edge_count_ = 0;
};

/// Centralised random network: for every one of the n(n-1)/2 pairs, in
/// lexicographic order, draw a fresh threshold in [0,1) and connect the pair
/// when p exceeds it. Throws std::invalid_argument if n == 0 or p is outside
/// [0,1].
Graph random_network_central(std::size_t n, double p, RngStream& rng);

/// One node's choice of peers in the localised construction.
struct SelectionVector
{
    NodeIndex owner = 0;
    /// Sorted, never contains owner.
    std::vector<NodeIndex> chosen;

    bool operator==(const SelectionVector&) const = default;
};

/// Draws k uniformly from [0, n-1] (n = all_nodes.size()), then samples k
/// distinct peers other than owner without replacement.
SelectionVector local_selection(NodeIndex owner, std::span<const NodeIndex> all_nodes, RngStream& rng);

/// Union rule: {a,b} is an edge iff a chose b or b chose a. Throws
/// std::invalid_argument if a selection names a node >= n.
Graph assemble_from_selections(std::size_t n, std::span<const SelectionVector> selections);

/// Edge list text: header "n=<count>" then one "u v" line per edge.
void write_edge_list(std::ostream& out, const Graph& g);
/// Throws std::runtime_error on malformed input.
Graph read_edge_list(std::istream& in);

} // namespace pchain

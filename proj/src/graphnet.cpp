#include <pchain/graphnet.hpp>

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace pchain {

Graph::Graph(std::size_t n) : adjacency_(n) {}

void Graph::check_node(NodeIndex v) const
{
    if (v >= adjacency_.size())
        throw std::invalid_argument("unknown node " + std::to_string(v));
}

bool Graph::add_edge(NodeIndex a, NodeIndex b)
{
    check_node(a);
    check_node(b);
    if (a == b)
        throw std::invalid_argument("self loop on node " + std::to_string(a));
    auto& na = adjacency_[a];
    auto it = std::lower_bound(na.begin(), na.end(), b);
    if (it != na.end() && *it == b)
        return false;
    na.insert(it, b);
    auto& nb = adjacency_[b];
    nb.insert(std::lower_bound(nb.begin(), nb.end(), a), a);
    ++edge_count_;
    return true;
}

bool Graph::remove_edge(NodeIndex a, NodeIndex b)
{
    check_node(a);
    check_node(b);
    auto& na = adjacency_[a];
    auto it = std::lower_bound(na.begin(), na.end(), b);
    if (it == na.end() || *it != b)
        return false;
    na.erase(it);
    auto& nb = adjacency_[b];
    nb.erase(std::lower_bound(nb.begin(), nb.end(), a));
    --edge_count_;
    return true;
}

bool Graph::has_edge(NodeIndex a, NodeIndex b) const
{
    if (a >= adjacency_.size() || b >= adjacency_.size())
        return false;
    const auto& na = adjacency_[a];
    return std::binary_search(na.begin(), na.end(), b);
}

std::vector<std::pair<NodeIndex, NodeIndex>> Graph::edges() const
{
    std::vector<std::pair<NodeIndex, NodeIndex>> out;
    out.reserve(edge_count_);
    for (NodeIndex u = 0; u < adjacency_.size(); ++u)
        for (auto v : adjacency_[u])
            if (u < v)
                out.emplace_back(u, v);
    return out;
}

Graph random_network_central(std::size_t n, double p, RngStream& rng)
{
    if (n == 0)
        throw std::invalid_argument("random network needs at least one node");
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("connection probability must lie in [0,1]");
    Graph g(n);
    for (NodeIndex a = 0; a < n; ++a) {
        for (NodeIndex b = a + 1; b < n; ++b) {
            const double threshold = rng.uniform01();
            if (p > threshold)
                g.add_edge(a, b);
            else
                g.remove_edge(a, b);
        }
    }
    return g;
}

SelectionVector local_selection(NodeIndex owner, std::span<const NodeIndex> all_nodes, RngStream& rng)
{
    SelectionVector sel{owner, {}};
    if (all_nodes.size() < 2)
        return sel;
    const auto k = rng.uniform_int(0, all_nodes.size() - 1);
    std::vector<NodeIndex> peers;
    peers.reserve(all_nodes.size());
    for (auto v : all_nodes)
        if (v != owner)
            peers.push_back(v);
    sel.chosen = rng.sample<NodeIndex>(peers, static_cast<std::size_t>(k));
    std::sort(sel.chosen.begin(), sel.chosen.end());
    return sel;
}

Graph assemble_from_selections(std::size_t n, std::span<const SelectionVector> selections)
{
    Graph g(n);
    for (const auto& s : selections) {
        if (s.owner >= n)
            throw std::invalid_argument("selection owner " + std::to_string(s.owner) + " is not a known node");
        for (auto v : s.chosen) {
            if (v >= n)
                throw std::invalid_argument("selection references unknown node " + std::to_string(v));
            if (v != s.owner)
                g.add_edge(s.owner, v);
        }
    }
    return g;
}

void write_edge_list(std::ostream& out, const Graph& g)
{
    out << "n=" << g.node_count() << '\n';
    for (auto [u, v] : g.edges())
        out << u << ' ' << v << '\n';
}

Graph read_edge_list(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || line.rfind("n=", 0) != 0)
        throw std::runtime_error("edge list must start with 'n=<count>'");
    std::size_t n = 0;
    try {
        n = std::stoul(line.substr(2));
    } catch (const std::exception&) {
        throw std::runtime_error("bad node count in edge list header");
    }
    Graph g(n);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream ls(line);
        long long u = -1, v = -1;
        std::string extra;
        if (!(ls >> u >> v) || (ls >> extra) || u < 0 || v < 0)
            throw std::runtime_error("malformed edge on line " + std::to_string(lineno));
        try {
            g.add_edge(static_cast<NodeIndex>(u), static_cast<NodeIndex>(v));
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return g;
}

} // namespace pchain

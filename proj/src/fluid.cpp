#include <pchain/fluid.hpp>

#include <algorithm>
#include <map>
#include <ostream>
#include <stdexcept>

namespace pchain {

std::vector<std::size_t> CommunityAssignment::sizes() const
{
    std::vector<std::size_t> out(k, 0);
    for (auto c : membership)
        if (c != unassigned)
            ++out.at(static_cast<std::size_t>(c));
    return out;
}

double density(const CommunityAssignment& assignment, CommunityId community)
{
    const auto n = static_cast<std::size_t>(std::count(assignment.membership.begin(), assignment.membership.end(), community));
    if (n == 0)
        throw std::logic_error("density of empty community " + std::to_string(community));
    return 1.0 / static_cast<double>(n);
}

namespace {

// Candidate set from cached community sizes.
std::vector<CommunityId> candidates_for(NodeIndex v,
                                        const std::vector<CommunityId>& membership,
                                        const std::vector<std::size_t>& sizes,
                                        const Graph& g)
{
    // count of community members in the closed neighbourhood of v
    std::map<CommunityId, std::size_t> counts;
    auto add = [&](NodeIndex w) {
        auto c = membership[w];
        if (c != unassigned)
            ++counts[c];
    };
    add(v);
    for (auto w : g.neighbors(v))
        add(w);

    std::vector<CommunityId> best;
    std::size_t best_num = 0, best_den = 1;
    for (auto [c, cnt] : counts) {
        const auto size = sizes[static_cast<std::size_t>(c)];
        // cnt/size against best_num/best_den
        const auto lhs = cnt * best_den;
        const auto rhs = best_num * size;
        if (best.empty() || lhs > rhs) {
            best.assign(1, c);
            best_num = cnt;
            best_den = size;
        } else if (lhs == rhs) {
            best.push_back(c);
        }
    }
    return best;
}

CommunityId choose(CommunityId current, const std::vector<CommunityId>& cand, RngStream& rng)
{
    if (cand.empty() || std::find(cand.begin(), cand.end(), current) != cand.end())
        return current;
    return cand[rng.uniform_int(0, cand.size() - 1)];
}

void check_sized(const Graph& g, const CommunityAssignment& a)
{
    if (a.membership.size() != g.node_count())
        throw std::invalid_argument("assignment does not match graph size");
}

std::vector<double> densities_of(const std::vector<std::size_t>& sizes)
{
    std::vector<double> d(sizes.size(), 0.0);
    for (std::size_t c = 0; c < sizes.size(); ++c)
        if (sizes[c] > 0)
            d[c] = 1.0 / static_cast<double>(sizes[c]);
    return d;
}

} // namespace

std::vector<CommunityId> update_candidates(NodeIndex v, const CommunityAssignment& assignment, const Graph& g)
{
    check_sized(g, assignment);
    return candidates_for(v, assignment.membership, assignment.sizes(), g);
}

CommunityId update_rule(NodeIndex v, const CommunityAssignment& assignment, const Graph& g, RngStream& rng)
{
    auto cand = update_candidates(v, assignment, g);
    return choose(assignment.membership[v], cand, rng);
}

CommunityAssignment detect_communities(const Graph& g, std::size_t k, RngStream& rng, const DetectOptions& options)
{
    const auto n = g.node_count();
    if (n == 0)
        throw std::invalid_argument("community detection on an empty graph");
    if (k == 0 || k > n)
        throw std::invalid_argument("k must lie in [1, |V|]");

    CommunityAssignment a;
    a.membership.assign(n, unassigned);
    a.k = k;

    std::vector<NodeIndex> nodes(n);
    for (NodeIndex v = 0; v < n; ++v)
        nodes[v] = v;

    std::vector<std::size_t> sizes(k, 0);
    auto assign = [&](NodeIndex v, CommunityId c) {
        auto& cur = a.membership[v];
        if (cur != unassigned)
            --sizes[static_cast<std::size_t>(cur)];
        cur = c;
        ++sizes[static_cast<std::size_t>(c)];
    };

    auto seeds = rng.sample<NodeIndex>(nodes, k);
    for (std::size_t c = 0; c < k; ++c)
        assign(seeds[c], static_cast<CommunityId>(c));

    while (a.supersteps < options.max_supersteps) {
        rng.shuffle(nodes);
        bool changed = false;
        for (auto v : nodes) {
            auto next = choose(a.membership[v], candidates_for(v, a.membership, sizes, g), rng);
            if (options.on_decision)
                options.on_decision(v, a, next);
            if (next != a.membership[v]) {
                assign(v, next);
                changed = true;
                if (options.on_change)
                    options.on_change(a, densities_of(sizes));
            }
        }
        ++a.supersteps;
        if (options.on_superstep)
            options.on_superstep(a);
        if (!changed) {
            a.converged = true;
            break;
        }
    }
    return a;
}

std::vector<NodeIndex> largest_community(const CommunityAssignment& assignment)
{
    auto sizes = assignment.sizes();
    if (sizes.empty())
        return {};
    // max_element returns the first maximum, i.e. the lowest id on ties.
    const auto best = static_cast<CommunityId>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    std::vector<NodeIndex> out;
    for (NodeIndex v = 0; v < assignment.membership.size(); ++v)
        if (assignment.membership[v] == best)
            out.push_back(v);
    return out;
}

void write_assignment(std::ostream& out, const CommunityAssignment& assignment)
{
    for (NodeIndex v = 0; v < assignment.membership.size(); ++v)
        out << v << ' ' << assignment.membership[v] << '\n';
    out << "k=" << assignment.k << " supersteps=" << assignment.supersteps
        << " converged=" << (assignment.converged ? "true" : "false") << '\n';
}

} // namespace pchain

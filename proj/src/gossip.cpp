#include <pchain/gossip.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <ostream>

namespace pchain {

void check_params(const GossipParams& params)
{
    if (params.n == 0 || params.w0_count == 0 || params.w0_count > params.n)
        throw std::invalid_argument("gossip needs 1 <= w0_count <= n");
    if (params.fanout == 0)
        throw std::invalid_argument("gossip fanout must be at least 1");
    if (!(params.beta >= 0.0 && params.beta <= 1.0))
        throw std::invalid_argument("gossip beta must lie in [0,1]");
}

double analytic_fraction(double t, const GossipParams& params)
{
    const double w0 = params.w0();
    if (w0 >= 1.0)
        return 1.0;
    const double r = params.rate();
    // Divide through by e^{rt} so large t does not overflow.
    const double decay = std::exp(-r * t);
    return w0 / ((1.0 - w0) * decay + w0);
}

double characteristic_time(const GossipParams& params)
{
    const double r = params.rate();
    if (r <= 0.0)
        throw std::invalid_argument("characteristic time needs beta * fanout > 0");
    return 1.0 / r;
}

namespace {

class Population
{
public:
    Population(std::size_t n, const Graph* topology) : n_(n), topology_(topology), holds_(n, false)
    {
        if (topology && topology->node_count() != n)
            throw std::invalid_argument("topology size does not match n");
    }

    bool infect(NodeIndex v)
    {
        if (holds_[v])
            return false;
        holds_[v] = true;
        holders_.push_back(v);
        return true;
    }

    bool holds(NodeIndex v) const { return holds_[v]; }
    std::size_t count() const { return holders_.size(); }
    const std::vector<NodeIndex>& holders() const { return holders_; }
    double fraction() const { return static_cast<double>(holders_.size()) / static_cast<double>(n_); }

    /// Uniformly random peer of `from`; n_ when there is none.
    NodeIndex random_peer(NodeIndex from, RngStream& rng) const
    {
        if (topology_) {
            auto nb = topology_->neighbors(from);
            if (nb.empty())
                return static_cast<NodeIndex>(n_);
            return nb[rng.uniform_int(0, nb.size() - 1)];
        }
        if (n_ < 2)
            return static_cast<NodeIndex>(n_);
        auto p = static_cast<NodeIndex>(rng.uniform_int(0, n_ - 2));
        return p >= from ? p + 1 : p;
    }

    /// Up to `k` distinct peers of `from`.
    std::vector<NodeIndex> random_peers(NodeIndex from, std::size_t k, RngStream& rng) const
    {
        if (topology_) {
            auto nb = topology_->neighbors(from);
            return rng.sample<NodeIndex>(nb, k);
        }
        k = std::min(k, n_ - 1);
        // Floyd's algorithm over the n-1 other nodes.
        std::vector<NodeIndex> out;
        out.reserve(k);
        for (std::size_t j = n_ - 1 - k; j < n_ - 1; ++j) {
            auto t = static_cast<NodeIndex>(rng.uniform_int(0, j));
            if (std::find(out.begin(), out.end(), t) != out.end())
                t = static_cast<NodeIndex>(j);
            out.push_back(t);
        }
        for (auto& p : out)
            if (p >= from)
                ++p;
        return out;
    }

    /// Nodes reachable from the current holders.
    std::size_t reachable_from_holders() const
    {
        if (!topology_)
            return n_;
        std::vector<bool> seen(n_, false);
        std::deque<NodeIndex> queue(holders_.begin(), holders_.end());
        for (auto v : holders_)
            seen[v] = true;
        std::size_t count = holders_.size();
        while (!queue.empty()) {
            auto v = queue.front();
            queue.pop_front();
            for (auto w : topology_->neighbors(v))
                if (!seen[w]) {
                    seen[w] = true;
                    ++count;
                    queue.push_back(w);
                }
        }
        return count;
    }

private:
    std::size_t n_;
    const Graph* topology_;
    std::vector<bool> holds_;
    std::vector<NodeIndex> holders_;
};

CoverageCurve run_discrete(const GossipParams& params, Population& pop, RngStream& rng, const GossipOptions& options)
{
    CoverageCurve curve;
    curve.samples.push_back({0.0, pop.fraction()});
    const auto reachable = pop.reachable_from_holders();
    const auto hop_cap = static_cast<std::size_t>(options.t_max);
    for (std::size_t hop = 1; pop.count() < params.n && hop <= hop_cap; ++hop) {
        if (pop.count() == reachable || params.beta == 0.0)
            break;
        const auto snapshot = pop.holders();
        std::vector<NodeIndex> infected;
        std::vector<bool> fresh(params.n, false);
        for (auto h : snapshot) {
            for (auto peer : pop.random_peers(h, params.fanout, rng)) {
                ++curve.messages;
                if (pop.holds(peer) || fresh[peer]) {
                    ++curve.wasted;
                    continue;
                }
                if (rng.bernoulli(params.beta)) {
                    fresh[peer] = true;
                    infected.push_back(peer);
                }
            }
        }
        for (auto v : infected)
            pop.infect(v);
        curve.samples.push_back({static_cast<double>(hop), pop.fraction()});
    }
    curve.complete = pop.count() == params.n;
    curve.plateaued = !curve.complete && pop.count() == reachable;
    return curve;
}

CoverageCurve run_continuous(const GossipParams& params, Population& pop, RngStream& rng, const GossipOptions& options)
{
    CoverageCurve curve;
    curve.samples.push_back({0.0, pop.fraction()});
    const auto reachable = pop.reachable_from_holders();
    const double push_rate = static_cast<double>(params.fanout);
    double t = 0.0;
    std::size_t next_sample = 1;
    auto sample_time = [&](std::size_t i) { return static_cast<double>(i) * options.sample_dt; };

    while (pop.count() < params.n && pop.count() < reachable && params.beta > 0.0) {
        t += rng.exponential(push_rate * static_cast<double>(pop.count()));
        if (t > options.t_max)
            break;
        // The state is constant between events, so record every grid point
        // passed before applying this one.
        while (sample_time(next_sample) < t) {
            curve.samples.push_back({sample_time(next_sample), pop.fraction()});
            ++next_sample;
        }
        const auto& holders = pop.holders();
        auto from = holders[rng.uniform_int(0, holders.size() - 1)];
        auto peer = pop.random_peer(from, rng);
        if (peer >= params.n)
            continue;
        ++curve.messages;
        if (pop.holds(peer)) {
            ++curve.wasted;
            continue;
        }
        if (rng.bernoulli(params.beta))
            pop.infect(peer);
    }
    // Close the curve on the next grid point at or after the final state.
    if (sample_time(next_sample - 1) < t || curve.samples.back().w != pop.fraction())
        curve.samples.push_back({sample_time(next_sample), pop.fraction()});
    curve.complete = pop.count() == params.n;
    curve.plateaued = !curve.complete && pop.count() == reachable;
    return curve;
}

} // namespace

CoverageCurve simulate_gossip(const GossipParams& params,
                              std::span<const NodeIndex> seeds,
                              RngStream& rng,
                              const GossipOptions& options)
{
    check_params(params);
    if (seeds.empty())
        throw std::invalid_argument("gossip needs at least one initial holder");
    Population pop(params.n, options.topology);
    for (auto s : seeds) {
        if (s >= params.n)
            throw std::invalid_argument("initial holder outside the population");
        pop.infect(s);
    }
    return options.timing == GossipTiming::discrete_hops ? run_discrete(params, pop, rng, options)
                                                         : run_continuous(params, pop, rng, options);
}

CoverageCurve simulate_gossip(const GossipParams& params, RngStream& rng, const GossipOptions& options)
{
    check_params(params);
    std::vector<NodeIndex> all(params.n);
    std::iota(all.begin(), all.end(), NodeIndex{0});
    auto seeds = rng.sample<NodeIndex>(all, params.w0_count);
    return simulate_gossip(params, seeds, rng, options);
}

CoverageCurve mean_curve(const GossipParams& params, std::size_t runs, RngStream& rng, const GossipOptions& options)
{
    if (runs == 0)
        throw std::invalid_argument("mean_curve needs at least one run");
    std::vector<CoverageCurve> curves;
    curves.reserve(runs);
    std::size_t longest = 0;
    for (std::size_t i = 0; i < runs; ++i) {
        curves.push_back(simulate_gossip(params, rng, options));
        longest = std::max(longest, curves.back().samples.size());
    }
    CoverageCurve mean;
    mean.complete = true;
    mean.samples.resize(longest);
    for (std::size_t i = 0; i < longest; ++i) {
        double sum = 0.0;
        double t = 0.0;
        for (const auto& c : curves) {
            const auto& s = i < c.samples.size() ? c.samples[i] : c.samples.back();
            sum += s.w;
            if (i < c.samples.size())
                t = s.t;
        }
        mean.samples[i] = {t, sum / static_cast<double>(runs)};
    }
    for (std::size_t i = 0; i < longest; ++i) {
        const double step = options.timing == GossipTiming::continuous ? options.sample_dt : 1.0;
        mean.samples[i].t = static_cast<double>(i) * step;
    }
    for (const auto& c : curves) {
        mean.complete = mean.complete && c.complete;
        mean.plateaued = mean.plateaued || c.plateaued;
        mean.messages += c.messages;
        mean.wasted += c.wasted;
    }
    return mean;
}

double fit_growth_rate(const CoverageCurve& curve)
{
    std::vector<double> xs, ys;
    for (const auto& s : curve.samples) {
        if (s.w > 0.0 && s.w < 0.3) {
            xs.push_back(s.t);
            ys.push_back(std::log(s.w / (1.0 - s.w)));
        }
    }
    if (xs.size() < 3)
        throw FitError("growth-rate fit needs at least 3 samples with w < 0.3");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0)
        throw FitError("growth-rate fit needs distinct sample times");
    return sxy / sxx;
}

double time_to_fraction(const CoverageCurve& curve, double target)
{
    const auto& s = curve.samples;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i].w >= target) {
            if (i == 0)
                return s[0].t;
            const auto& a = s[i - 1];
            const auto& b = s[i];
            return a.t + (target - a.w) / (b.w - a.w) * (b.t - a.t);
        }
    }
    return -1.0;
}

double max_deviation(const CoverageCurve& curve, const GossipParams& params, double w_lo, double w_hi)
{
    double worst = 0.0;
    for (const auto& s : curve.samples) {
        const double a = analytic_fraction(s.t, params);
        if (a >= w_lo && a <= w_hi)
            worst = std::max(worst, std::abs(s.w - a));
    }
    return worst;
}

void write_coverage_csv(std::ostream& out, const CoverageCurve& curve, const GossipParams& params)
{
    out << "t,w_empirical,w_analytic\n";
    for (const auto& s : curve.samples)
        out << s.t << ',' << s.w << ',' << analytic_fraction(s.t, params) << '\n';
}

} // namespace pchain

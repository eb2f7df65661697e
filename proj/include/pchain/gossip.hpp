#pragma once

#include <pchain/graphnet.hpp>
#include <pchain/rng.hpp>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

namespace pchain {

struct GossipParams
{
    /// Total node count.
    std::size_t n = 1000;
    /// Nodes holding the message at t = 0 (the witness set).
    std::size_t w0_count = 10;
    /// Peers each holder pushes to per unit time.
    std::size_t fanout = 3;
    /// Probability that a push to a non-holder transmits.
    double beta = 0.5;

    double w0() const { return static_cast<double>(w0_count) / static_cast<double>(n); }
    double rate() const { return beta * static_cast<double>(fanout); }
};

/// Throws std::invalid_argument unless 1 <= w0_count <= n, fanout >= 1 and
/// beta in [0,1].
void check_params(const GossipParams& params);

struct CoveragePoint
{
    double t = 0;
    double w = 0;
};

struct CoverageCurve
{
    std::vector<CoveragePoint> samples;
    /// Every node holds the message at the last sample.
    bool complete = false;
    /// Stopped below full coverage because no further node was reachable.
    bool plateaued = false;
    std::uint64_t messages = 0;
    /// Pushes that reached a node already holding the message.
    std::uint64_t wasted = 0;
};

/// Logistic solution of dw/dt = beta*f*w*(1-w) with w(0) = w0:
/// w0 e^{rt} / (1 - w0 + w0 e^{rt}), r = beta*f.
double analytic_fraction(double t, const GossipParams& params);

/// tau = 1 / (beta * f). Throws std::invalid_argument when beta*f == 0.
double characteristic_time(const GossipParams& params);

enum class GossipTiming {
    /// Synchronous rounds: every holder pushes to `fanout` distinct peers per
    /// hop, one hop per time unit.
    discrete_hops,
    /// Asynchronous pushes: each holder pushes at rate `fanout` per time
    /// unit (Poisson), sampled on a time grid. This is the regime the
    /// logistic model describes.
    continuous,
};

struct GossipOptions
{
    GossipTiming timing = GossipTiming::continuous;
    /// Sampling interval for continuous timing.
    double sample_dt = 0.1;
    /// Upper bound on simulated time (hops for discrete timing).
    double t_max = 10'000;
    /// Restrict pushes to graph neighbours; null means homogeneous mixing.
    const Graph* topology = nullptr;
};

/// Runs one epidemic from the given initial holders.
CoverageCurve simulate_gossip(const GossipParams& params,
                              std::span<const NodeIndex> seeds,
                              RngStream& rng,
                              const GossipOptions& options = {});

/// Same, with params.w0_count holders drawn uniformly at random.
CoverageCurve simulate_gossip(const GossipParams& params, RngStream& rng, const GossipOptions& options = {});

/// Pointwise mean over `runs` independent curves on a common grid. Runs that
/// finish early are padded with their final value.
CoverageCurve mean_curve(const GossipParams& params, std::size_t runs, RngStream& rng, const GossipOptions& options = {});

class FitError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Least-squares slope of ln(w/(1-w)) against t over samples with
/// 0 < w < 0.3. Throws FitError with fewer than 3 such samples.
double fit_growth_rate(const CoverageCurve& curve);

/// First time the curve reaches `target`, linearly interpolated between
/// samples. Returns a negative value if it never does.
double time_to_fraction(const CoverageCurve& curve, double target);

/// Largest |w_empirical - w_analytic| over samples whose analytic value lies
/// in [w_lo, w_hi].
double max_deviation(const CoverageCurve& curve, const GossipParams& params, double w_lo, double w_hi);

/// "t,w_empirical,w_analytic" rows.
void write_coverage_csv(std::ostream& out, const CoverageCurve& curve, const GossipParams& params);

} // namespace pchain

#pragma once

// On/off constant-bit-rate content streams. Every user requests one content;
// its stream starts at sequence 0 at the user's own start offset, so two users
// of the same content see the same frames shifted in time.

#include "omcast/queueing.hpp"
#include "omcast/rng.hpp"
#include "omcast/types.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace omcast::traffic {

struct TrafficConfig {
    int contents = 10;
    double rate_bps = 0.5e6;
    double on_s = 2.0;
    double off_s = 1.0;
    double start_spread_s = 0.5;
    std::uint32_t frame_bits = 8000;

    friend bool operator==(const TrafficConfig&, const TrafficConfig&) = default;
};

struct FlowSpec {
    UserId user = 0;
    ContentId content = 0;
    double rate_bps = 0.0;
    double start_offset_s = 0.0;
    double on_s = 2.0;
    double off_s = 1.0;
    std::uint32_t frame_bits = 8000;

    double interarrival_s() const { return static_cast<double>(frame_bits) / rate_bps; }
    double period_s() const { return on_s + off_s; }

    /// Frames emitted in one ON phase.
    SeqNo frames_per_on() const
    {
        if (!(rate_bps > 0.0)) {
            return 0;
        }
        return static_cast<SeqNo>(std::ceil(on_s * rate_bps / static_cast<double>(frame_bits) - 1e-9));
    }

    double arrival_time(SeqNo seq) const
    {
        const SeqNo per_on = frames_per_on();
        const SeqNo cycle = seq / per_on;
        const SeqNo pos = seq % per_on;
        return start_offset_s + static_cast<double>(cycle) * period_s() + static_cast<double>(pos) * interarrival_s();
    }

    queueing::Frame frame(SeqNo seq) const
    {
        return queueing::Frame{content, seq, frame_bits, arrival_time(seq), 0};
    }
};

/// Uniform content choice and start offset in [0, spread) per user.
inline std::vector<FlowSpec> assign_contents(std::size_t users, const TrafficConfig& cfg, std::uint64_t seed)
{
    if (users == 0) {
        throw std::invalid_argument("need at least one user");
    }
    if (cfg.contents < 1) {
        throw std::invalid_argument("need at least one content");
    }
    auto eng = make_engine(seed, Stream::traffic);
    std::uniform_int_distribution<int> pick{0, cfg.contents - 1};
    std::uniform_real_distribution<double> offset{0.0, cfg.start_spread_s};
    std::vector<FlowSpec> flows;
    flows.reserve(users);
    for (UserId k = 0; k < users; ++k) {
        FlowSpec f;
        f.user = k;
        f.content = pick(eng);
        f.start_offset_s = cfg.start_spread_s > 0.0 ? offset(eng) : 0.0;
        f.rate_bps = cfg.rate_bps;
        f.on_s = cfg.on_s;
        f.off_s = cfg.off_s;
        f.frame_bits = cfg.frame_bits;
        flows.push_back(f);
    }
    return flows;
}

/// Frames whose arrival time lies in [t0, t1).
inline std::vector<queueing::Frame> arrivals_in(const FlowSpec& flow, double t0, double t1)
{
    if (!(t0 < t1)) {
        throw std::invalid_argument("arrivals_in needs t0 < t1");
    }
    std::vector<queueing::Frame> out;
    const SeqNo per_on = flow.frames_per_on();
    if (per_on == 0) {
        return out;
    }
    const double rel = t0 - flow.start_offset_s;
    SeqNo seq = rel > 0.0 ? static_cast<SeqNo>(std::floor(rel / flow.period_s())) * per_on : 0;
    for (;; ++seq) {
        const double a = flow.arrival_time(seq);
        if (a >= t1) {
            break;
        }
        if (a >= t0) {
            out.push_back(flow.frame(seq));
        }
    }
    return out;
}

/// Sequential generator over one flow, equivalent to successive arrivals_in
/// calls on adjacent windows.
class FlowCursor {
public:
    explicit FlowCursor(FlowSpec flow) : flow_(flow) {}

    const FlowSpec& flow() const noexcept { return flow_; }

    /// Appends every not-yet-emitted frame arriving before t1.
    template <class Sink>
    void emit_until(double t1, Sink&& sink)
    {
        if (flow_.frames_per_on() == 0) {
            return;
        }
        while (flow_.arrival_time(next_) < t1) {
            sink(flow_.frame(next_));
            ++next_;
        }
    }

    SeqNo next_seq() const noexcept { return next_; }

private:
    FlowSpec flow_;
    SeqNo next_ = 0;
};

} // namespace omcast::traffic

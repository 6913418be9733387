#pragma once

// Per-user AP queues, the queue-length and HOL-delay recursions, and the
// user-side cache of opportunistically received frames.

#include "omcast/types.hpp"

#include <algorithm>
#include <compare>
#include <cstdint>
#include <deque>
#include <set>
#include <stdexcept>
#include <vector>

namespace omcast::queueing {

struct FrameKey {
    ContentId content = 0;
    SeqNo seq = 0;

    auto operator<=>(const FrameKey&) const = default;
};

struct Frame {
    ContentId content = 0;
    SeqNo seq = 0;
    std::uint32_t size_bits = 8000;
    double arrival_s = 0.0;
    int retx_count = 0;

    FrameKey key() const noexcept { return {content, seq}; }

    friend bool operator==(const Frame&, const Frame&) = default;
};

/// What happens to a cached frame once the same frame reaches the user's AP
/// queue: `consume` hands the copy to the application and frees the slot,
/// `retain` keeps it for the rest of the session.
enum class CacheRelease { consume, retain };

class UserCache {
public:
    explicit UserCache(CacheRelease policy = CacheRelease::consume) : policy_(policy) {}

    /// Returns false if the pair was already present.
    bool insert(FrameKey key)
    {
        const bool added = keys_.insert(key).second;
        peak_ = std::max(peak_, keys_.size());
        return added;
    }

    bool contains(FrameKey key) const { return keys_.contains(key); }

    void release(FrameKey key)
    {
        if (policy_ == CacheRelease::consume) {
            keys_.erase(key);
        }
    }

    std::size_t occupancy() const noexcept { return keys_.size(); }
    std::size_t peak() const noexcept { return peak_; }
    CacheRelease policy() const noexcept { return policy_; }

private:
    std::set<FrameKey> keys_;
    std::size_t peak_ = 0;
    CacheRelease policy_;
};

/// FIFO of frames plus the Q_k / Z_k / Z~_k registers.
class UserQueue {
public:
    void push(const Frame& f)
    {
        if (f.size_bits == 0) {
            throw std::invalid_argument("frame size must be positive");
        }
        frames_.push_back(f);
        bits_ += f.size_bits;
    }

    Frame pop_front()
    {
        Frame f = frames_.front();
        frames_.pop_front();
        bits_ -= f.size_bits;
        return f;
    }

    std::vector<Frame> pop_front(std::size_t n)
    {
        std::vector<Frame> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n && !frames_.empty(); ++i) {
            out.push_back(pop_front());
        }
        return out;
    }

    bool empty() const noexcept { return frames_.empty(); }
    std::size_t size() const noexcept { return frames_.size(); }
    const Frame& front() const { return frames_.front(); }
    const Frame& operator[](std::size_t i) const { return frames_[i]; }
    Frame& operator[](std::size_t i) { return frames_[i]; }
    const std::deque<Frame>& frames() const noexcept { return frames_; }

    /// Q_k in bits; always the sum of queued frame sizes.
    std::uint64_t bits() const noexcept { return bits_; }

    /// Bits held by the first n frames.
    std::uint64_t prefix_bits(std::size_t n) const
    {
        std::uint64_t b = 0;
        for (std::size_t i = 0; i < n && i < frames_.size(); ++i) {
            b += frames_[i].size_bits;
        }
        return b;
    }

    /// Arrival gap in ms between the HOL frame and frame n, i.e. how much the
    /// HOL delay falls if the first n frames leave. `fallback` is used when
    /// n reaches past the tail (the queue would empty).
    double hol_gap_ms(std::size_t n, double fallback) const
    {
        if (n >= frames_.size()) {
            return fallback;
        }
        return (frames_[n].arrival_s - frames_.front().arrival_s) * kMsPerSecond;
    }

    double hol_age_ms(double now_s) const
    {
        return frames_.empty() ? 0.0 : (now_s - frames_.front().arrival_s) * kMsPerSecond;
    }

    double z_ms = 0.0;       // Z_k[t]
    double z_tilde_ms = 0.0; // Z~_k[t+1]

private:
    std::deque<Frame> frames_;
    std::uint64_t bits_ = 0;
};

/// Q[t+1] = max{0, Q - b - d} + A. Arrivals are added after service.
inline double update_queue_length(double q_bits, double b_bits, double d_bits, double a_bits)
{
    return std::max(0.0, q_bits - b_bits - d_bits) + a_bits;
}

/// psi = min(M, Z) if served, -eps T otherwise.
inline double psi(bool mu, double m_ms, double z_ms, double t_s, double epsilon)
{
    return mu ? std::min(m_ms, z_ms) : -epsilon * t_s;
}

/// Z~[t+1] = max{0, Z[t] - psi}
inline double update_intermediate_hol(double z_ms, double psi_ms)
{
    return std::max(0.0, z_ms - psi_ms);
}

/// phi = min(M, Z~) if frames are dropped, 0 otherwise.
inline double phi(bool omega, double m_ms, double z_tilde_ms)
{
    return omega ? std::min(m_ms, z_tilde_ms) : 0.0;
}

/// Z[t+1] = max{0, Z~[t+1] - phi}
inline double update_hol(double z_tilde_ms, double phi_ms)
{
    return std::max(0.0, z_tilde_ms - phi_ms);
}

/// Everything the AP tracks about one user.
struct UserState {
    UserId id = 0;
    ContentId content = 0;
    double snr_db = 0.0;
    UserQueue queue;
    UserCache cache;
    /// Sequence number of the next frame the user's own stream will deliver
    /// to the AP queue; anything below it has already arrived.
    SeqNo next_seq = 0;
    /// Errored frames at the head of the queue awaiting retransmission.
    std::size_t retx_pending = 0;
};

/// Whether user `u` benefits from receiving `f` now: same content, not
/// cached, and not yet arrived in u's own stream.
inline bool needs(const UserState& u, const Frame& f)
{
    return f.content == u.content && f.seq >= u.next_seq && !u.cache.contains(f.key());
}

enum class EnqueueResult { queued, cache_served };

/// Frames the user already holds are discarded at the AP.
inline EnqueueResult enqueue(UserQueue& queue, const Frame& frame, UserCache& cache)
{
    if (cache.contains(frame.key())) {
        cache.release(frame.key());
        return EnqueueResult::cache_served;
    }
    queue.push(frame);
    return EnqueueResult::queued;
}

/// Cache insert with set semantics; returns the new occupancy.
inline std::size_t cache_insert(UserCache& cache, ContentId content, SeqNo seq)
{
    cache.insert({content, seq});
    return cache.occupancy();
}

} // namespace omcast::queueing

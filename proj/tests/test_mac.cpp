#include "omcast/mac.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace omcast;
using namespace omcast::mac;

namespace {

constexpr double kUs = 1e-6;

auto nobody = [](std::size_t, const queueing::Frame&) { return false; };

queueing::UserQueue queue_of(std::size_t frames, ContentId content = 0, SeqNo first = 0)
{
    queueing::UserQueue q;
    for (std::size_t i = 0; i < frames; ++i) {
        q.push(queueing::Frame{content, first + static_cast<SeqNo>(i), 8000, 0.016 * static_cast<double>(i), 0});
    }
    return q;
}

// Fixed channels keyed by user, all at one sounding epoch.
struct FixedChannels {
    std::map<UserId, phy::ChannelMatrix> by_user;
    const phy::ChannelMatrix& operator()(UserId k) const { return by_user.at(k); }
};

phy::ChannelMatrix strong(UserId user, std::size_t antenna)
{
    std::vector<phy::Complex> row(4, 0.0);
    row[antenna] = 1e3; // 60 dB
    return phy::ChannelMatrix::miso(std::vector<std::vector<phy::Complex>>(52, row), user);
}

} // namespace

TEST(SlotDuration, PureOverheadForUnicast)
{
    const TimingModel tm;
    const double expect = (68 + 16 + 48 + 16 + 120 + 40 + 16 + 32 + 34 + 9 * 7.5) * kUs;
    EXPECT_NEAR(slot_duration(1, 0.0, 65e6, tm), expect, 1e-15);
}

TEST(SlotDuration, GroupOfFourAddsPollsFeedbackAcks)
{
    const TimingModel tm;
    const double diff = slot_duration(4, 24000, 39e6, tm) - slot_duration(1, 24000, 39e6, tm);
    EXPECT_NEAR(diff, (3 * (44 + 16 + 120 + 16 + 32) + 3 * 28) * kUs, 1e-15);
}

TEST(SlotDuration, DataAirtimeIsBitsOverRate)
{
    const TimingModel tm;
    EXPECT_NEAR(slot_duration(1, 65000, 65e6, tm) - slot_duration(1, 0, 65e6, tm), 1e-3, 1e-15);
}

TEST(SlotDuration, StrictlyIncreasingInGroupSize)
{
    const TimingModel tm;
    for (std::size_t g = 1; g < 4; ++g) {
        EXPECT_LT(slot_duration(g, 8000, 26e6, tm), slot_duration(g + 1, 8000, 26e6, tm));
    }
    EXPECT_THROW(slot_duration(0, 0, 1e6, tm), std::invalid_argument);
    EXPECT_THROW(slot_duration(1, 0, 0.0, tm), std::invalid_argument);
}

TEST(PackBurst, TopMcsFillsTwentyFourFrames)
{
    const auto q = queue_of(40);
    const auto plan = pack_burst(q, 65e6, 1, nobody, 3e-3);
    EXPECT_EQ(plan.frames, 24u);
    EXPECT_LE(plan.data_airtime_s, 3e-3);
    EXPECT_EQ(plan.b_bits, 24 * 8000.0);
}

TEST(PackBurst, LowestMcsFitsTwoFrames)
{
    const auto q = queue_of(40);
    EXPECT_EQ(pack_burst(q, 6.5e6, 1, nobody, 3e-3).frames, 2u);
}

TEST(PackBurst, EmptyQueue)
{
    const queueing::UserQueue q;
    const auto plan = pack_burst(q, 65e6, 1, nobody, 3e-3);
    EXPECT_EQ(plan.frames, 0u);
    EXPECT_EQ(plan.b_bits, 0.0);
}

TEST(PackBurst, MulticastBitsCountEveryRecipient)
{
    const auto q = queue_of(10);
    // Member 1 needs everything from seq 4, member 2 needs nothing.
    auto needs = [](std::size_t m, const queueing::Frame& f) { return m == 1 && f.seq >= 4; };
    const auto plan = pack_burst(q, 65e6, 3, needs, 3e-3);
    EXPECT_EQ(plan.frames, 10u);
    EXPECT_EQ(plan.member_frames, (std::vector<std::size_t>{10, 6, 0}));
    EXPECT_EQ(plan.b_bits, 16 * 8000.0);
}

class TransactTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        users.resize(3);
        for (UserId k = 0; k < 3; ++k) {
            users[k].id = k;
            users[k].content = 0;
            users[k].snr_db = 60.0;
            channels.by_user.emplace(k, strong(k, k));
        }
        users[0].queue = queue_of(5, 0, 10);
        users[0].next_seq = 15;
        users[1].next_seq = 12; // needs 12..14
        users[2].next_seq = 20; // needs nothing
        ctx.model = &model;
        ctx.mcs = &table;
    }

    SchedulerDecision decide(std::vector<UserId> group, bool retx = false)
    {
        SchedulerDecision d;
        d.intended = group.front();
        d.group = std::move(group);
        d.retransmission = retx;
        return d;
    }

    phy::ChannelModel model;
    phy::McsTable table;
    LinkContext ctx;
    std::vector<queueing::UserState> users;
    FixedChannels channels;
};

TEST_F(TransactTest, ErrorFreeDeliversPackedBurstAndFillsCaches)
{
    const auto out = transact(decide({0, 1, 2}), users, channels, ctx);
    ASSERT_TRUE(out.transmitted);
    EXPECT_EQ(out.delivered.size(), 5u);
    EXPECT_TRUE(users[0].queue.empty());
    EXPECT_EQ(users[0].retx_pending, 0u);
    EXPECT_EQ(out.cached, (std::vector<std::size_t>{0, 3, 0}));
    EXPECT_TRUE(users[1].cache.contains({0, 12}));
    EXPECT_TRUE(users[1].cache.contains({0, 14}));
    EXPECT_FALSE(users[1].cache.contains({0, 11}));
    EXPECT_EQ(users[2].cache.occupancy(), 0u);
    EXPECT_EQ(out.b_total_bits, 8 * 8000.0);
    EXPECT_TRUE(std::isinf(out.hol_gap_ms));
    EXPECT_LE(out.data_airtime_s, ctx.mac.txop_s);
}

TEST_F(TransactTest, PartialBurstReportsGapToSurvivor)
{
    users[0].queue = queue_of(30, 0, 10);
    const auto out = transact(decide({0}), users, channels, ctx);
    EXPECT_EQ(out.delivered.size(), 24u);
    EXPECT_NEAR(out.hol_gap_ms, 24 * 16.0, 1e-9);
    EXPECT_EQ(users[0].queue.front().seq, 34);
}

TEST_F(TransactTest, NoUsableMcsMeansNoTransmission)
{
    std::vector<phy::Complex> weak(4, 1e-3);
    channels.by_user[0] = phy::ChannelMatrix::miso(std::vector<std::vector<phy::Complex>>(52, weak), 0);
    const auto out = transact(decide({0}), users, channels, ctx);
    EXPECT_FALSE(out.transmitted);
    EXPECT_FALSE(out.mcs.has_value());
    EXPECT_EQ(users[0].queue.size(), 5u);
    EXPECT_NEAR(out.duration_s, no_transmission_duration(1, ctx.mac.timing), 1e-15);
}

TEST_F(TransactTest, IntendedErrorSchedulesRetransmissionThenDrops)
{
    // Every realized channel is an independent draw, far too weak for the
    // sounded MCS: all members err.
    ctx.errors.enabled = true;
    ctx.errors.csi_error = 1.0;
    for (auto& u : users) {
        u.snr_db = -30.0;
    }
    ctx.mac.max_retx = 3;
    for (int attempt = 0; attempt < 3; ++attempt) {
        const bool retx = attempt > 0;
        ctx.epoch = static_cast<std::uint64_t>(attempt);
        const auto out = transact(decide({0, 1}, retx), users, channels, ctx);
        EXPECT_TRUE(out.member_error[0]);
        EXPECT_TRUE(out.member_error[1]);
        EXPECT_EQ(out.errored, 5u);
        EXPECT_TRUE(out.exhausted.empty());
        EXPECT_EQ(users[0].retx_pending, 5u);
        EXPECT_EQ(users[0].queue.front().retx_count, attempt + 1);
        EXPECT_EQ(users[1].cache.occupancy(), 0u); // no retransmission for members
    }
    const auto out = transact(decide({0}, true), users, channels, ctx);
    EXPECT_EQ(out.exhausted.size(), 5u);
    EXPECT_TRUE(users[0].queue.empty());
    EXPECT_EQ(users[0].retx_pending, 0u);
}

TEST_F(TransactTest, RetransmissionCarriesOnlyPendingFrames)
{
    users[0].retx_pending = 2;
    const auto out = transact(decide({0}, true), users, channels, ctx);
    EXPECT_EQ(out.delivered.size(), 2u);
    EXPECT_EQ(users[0].queue.size(), 3u);
    EXPECT_EQ(users[0].retx_pending, 0u);
}

TEST_F(TransactTest, RejectsMalformedDecisions)
{
    SchedulerDecision idle;
    EXPECT_THROW(transact(idle, users, channels, ctx), std::invalid_argument);
    auto d = decide({0, 1});
    d.group = {1, 0};
    EXPECT_THROW(transact(d, users, channels, ctx), std::invalid_argument);
}

TEST(Backoff, FixedUnlessRandomized)
{
    TimingModel tm;
    EXPECT_FALSE(draw_backoff(tm, 1, 1).has_value());
    tm.random_backoff = true;
    for (std::uint64_t e = 0; e < 200; ++e) {
        const auto b = draw_backoff(tm, 1, e);
        ASSERT_TRUE(b.has_value());
        EXPECT_GE(*b, 0.0);
        EXPECT_LE(*b, 15.0);
        EXPECT_EQ(*b, *draw_backoff(tm, 1, e));
    }
}

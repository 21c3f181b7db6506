#include <gtest/gtest.h>

#include "lsmix/verify.hpp"
#include "test_util.hpp"

using namespace lsmix;
using lsmix::testing::TempDir;

namespace {

void expect_ok(const SuiteResult& r) {
    EXPECT_TRUE(r.ok()) << r.name << ": " << r.passed << "/" << r.checks << (r.failures.empty() ? "" : " first: " + r.failures[0]);
}

}  // namespace

TEST(Verify, FastSuitesPassForSeveralSeeds) {
    TempDir dir("verify");
    for (std::uint64_t seed : {0, 1, 2}) {
        const VerifyOptions opt{seed, dir.path().string()};
        for (const char* name : {"gradients", "degeneracy", "jensen-gap", "parsers"}) {
            const auto r = run_verify_suite(name, opt);
            expect_ok(r);
            EXPECT_EQ(r.name, name);
        }
    }
}

TEST(Verify, SuiteSizes) {
    TempDir dir("verify_sizes");
    const VerifyOptions opt{0, dir.path().string()};
    EXPECT_EQ(verify_gradients(opt).checks, 100u * 5 * 2);
    EXPECT_EQ(verify_jensen_gap(opt).checks, 1000u);
    const auto loc = verify_norm_localization(opt);
    expect_ok(loc);
    EXPECT_EQ(loc.checks, 21u * 4);
    const auto cert = verify_certificates(opt);
    expect_ok(cert);
    EXPECT_EQ(cert.checks, 200u * 2 + 40);
}

TEST(Verify, ParsersLeaveOutputDirectoryClean) {
    TempDir dir("verify_clean");
    const auto out = dir.path() / "out";
    const auto r = verify_parsers({5, out.string()});
    expect_ok(r);
    EXPECT_GT(r.checks, 50u);
    // Only the output directory itself may exist afterwards, and nothing else under the temp dir.
    std::size_t entries = 0;
    for (auto it = std::filesystem::recursive_directory_iterator(dir.path()); it != std::filesystem::recursive_directory_iterator(); ++it)
        ++entries;
    EXPECT_EQ(entries, 1u);
}

TEST(Verify, UnknownSuite) {
    EXPECT_THROW(run_verify_suite("nope", {}), ConfigError);
    EXPECT_EQ(verify_suite_names().size(), 6u);
}

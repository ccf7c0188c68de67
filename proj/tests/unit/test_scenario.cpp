#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "netsec/error.hpp"
#include "netsec/scenario.hpp"

using namespace netsec;
using namespace netsec::scenario;

namespace {

template <typename F>
Error error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  FAIL("no error thrown");
  return Error(Errc::InvalidArgument);
}

const char* kSmurf = R"(
[scenario]
name = smurf
seed = 3

[topology]
use smurf 5

[script]
0 smurf attacker=M victim=V domain=AMP

[assert]
smurf.replies_to_victim == 5
)";

std::string with_policy(const std::string& base, const std::string& policy) {
  auto at = base.find("[script]");
  return base.substr(0, at) + "[policy]\n" + policy + "\n\n" + base.substr(at);
}

}  // namespace

TEST_CASE("minimal file parses") {
  auto s = parse_scenario("[topology]\nhost A 10.0.0.1/24\nhost B 10.0.0.2/24\nlink A B\n");
  CHECK(s.topology.nodes.size() == 2);
  CHECK(s.script.empty());
  CHECK(s.seed == 1);
}

TEST_CASE("diagnostics carry line numbers") {
  auto e = error_of([] { parse_scenario("[topology]\nuse lan_trio\n[script]\n0 smurff attacker=M\n"); });
  CHECK(e.code() == Errc::UnknownAction);
  CHECK(std::string(e.what()).find(": line 4:") != std::string::npos);

  e = error_of([] { parse_scenario("[topology]\nuse lan_trio\n[script]\n0 ping from=C to=Q\n"); });
  CHECK(e.code() == Errc::UnknownNodeRef);
  CHECK(std::string(e.what()).find(": line 4:") != std::string::npos);

  e = error_of([] { parse_scenario("[topology]\nhost A\nlink A Z\n"); });
  CHECK(e.code() == Errc::UnknownNodeRef);
  CHECK(std::string(e.what()).find(": line 3:") != std::string::npos);

  CHECK(error_of([] { parse_scenario("[topology]\nuse lan_trio\n[policy]\nQ blackhole on\n"); }).code() ==
        Errc::UnknownNodeRef);
  CHECK(error_of([] { parse_scenario("[bogus]\n"); }).code() == Errc::SyntaxError);
  CHECK(error_of([] { parse_scenario("[topology]\nuse lan_trio\n[script]\n0 ping from=C\n"); }).code() ==
        Errc::SyntaxError);
  CHECK(error_of([] { parse_scenario("[topology]\nuse lan_trio\n[script]\n0 ping from=C to=S colour=red\n"); })
            .code() == Errc::SyntaxError);
  CHECK(error_of([] { parse_scenario("[topology]\nuse lan_trio\n[script]\n0 ping from=C to=S\n[assert]\nping.x == 1\n"); })
            .code() == Errc::SyntaxError);
  CHECK(error_of([] { parse_scenario("[topology]\nuse lan_trio\n[script]\n5 run\n2 run\n"); }).code() ==
        Errc::SyntaxError);
  CHECK(error_of([] { parse_scenario("[topology]\nuse lan_trio\n[script]\n0 send conn=nope data=x\n"); }).code() ==
        Errc::SyntaxError);
}

TEST_CASE("labels, quoting and comments") {
  auto s = parse_scenario(R"([topology]
use lan_trio   # C S M
[script]
0 ping from=C to=S
0 ping from=S to=C
0 udp from=C to=S data="two words # not a comment" as=hello
[assert]
ping.2.replies == 1
hello.delivered == 1
)");
  REQUIRE(s.script.size() == 3);
  CHECK(s.script[0].label == "ping");
  CHECK(s.script[1].label == "ping.2");
  CHECK(s.script[2].label == "hello");
  CHECK(s.script[2].args.at("data") == "two words # not a comment");
  auto r = run_scenario(s);
  CHECK(r.exit_status == 0);
}

TEST_CASE("empty script gives an empty trace") {
  auto r = run_scenario(parse_scenario("[topology]\nuse smurf 2\n[policy]\nR directed_broadcast off\n"));
  CHECK(r.trace.empty());
  CHECK(r.exit_status == 0);
}

TEST_CASE("stock smurf passes and a mitigation flips it") {
  auto base = run_scenario(parse_scenario(kSmurf));
  CHECK(base.exit_status == 0);
  CHECK(base.metrics.at("smurf.replies_to_victim") == "5");

  for (const char* fix : {"R directed_broadcast off",
                          "H1 broadcast_echo off\nH2 broadcast_echo off\nH3 broadcast_echo off\n"
                          "H4 broadcast_echo off\nH5 broadcast_echo off"}) {
    auto r = run_scenario(parse_scenario(with_policy(kSmurf, fix)));
    CHECK(r.metrics.at("smurf.replies_to_victim") == "0");
    CHECK(r.exit_status == 1);
    REQUIRE(r.assertions.size() == 1);
    CHECK_FALSE(r.assertions[0].passed);
    CHECK(r.assertions[0].actual == "0");
  }
}

TEST_CASE("operation errors become failed assertions") {
  auto r = run_scenario(parse_scenario(R"([topology]
use lan_trio
[script]
0 listen node=S port=23
0 connect from=C to=S port=23
0 hijack attacker=M conn=connect payload=x
[assert]
hijack.injected == 1
hijack.error == NoTap
connect.established == 1
)"));
  CHECK(r.metrics.at("hijack.ok") == "0");
  REQUIRE(r.assertions.size() == 3);
  CHECK_FALSE(r.assertions[0].passed);
  CHECK(r.assertions[0].actual == "<missing>");
  CHECK(r.assertions[1].passed);
  CHECK(r.assertions[2].passed);
  CHECK(r.exit_status == 1);
}

TEST_CASE("exit status is a function of the assertion results") {
  Assertion a;
  CHECK(exit_status({}) == 0);
  CHECK(exit_status({{a, true, "1"}, {a, true, "1"}}) == 0);
  CHECK(exit_status({{a, true, "1"}, {a, false, "1"}}) == 1);
}

TEST_CASE("comparators") {
  auto r = run_scenario(parse_scenario(R"([topology]
use smurf 3
[script]
0 smurf attacker=M victim=V domain=AMP
0 key_count mode=e2e_public n=10
[assert]
smurf.replies_to_victim >= 3
smurf.replies_to_victim < 4
smurf.replies_to_victim != 10
key_count.keys == 20
key_count.keys > 9
key_count.error == none
)"));
  for (const auto& a : r.assertions) CHECK_MESSAGE(a.passed, a.assertion.text());
}

TEST_CASE("ticks advance the clock") {
  auto r = run_scenario(parse_scenario("[topology]\nuse lan_trio\n[script]\n0 run\n40 ping from=C to=S\n"));
  REQUIRE_FALSE(r.trace.empty());
  CHECK(r.trace.back().time >= 40);
}

TEST_CASE("trace files are deterministic") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto p1 = (dir / "netsec_scn_a.trace").string();
  const auto p2 = (dir / "netsec_scn_b.trace").string();
  write_trace(run_scenario(parse_scenario(kSmurf)).trace, p1);
  write_trace(run_scenario(parse_scenario(kSmurf)).trace, p2);
  const auto a = simnet::read_trace_lines(p1);
  CHECK_FALSE(a.empty());
  CHECK(a == simnet::read_trace_lines(p2));

  write_trace({}, p1);
  CHECK(simnet::read_trace_lines(p1).empty());
  CHECK(std::filesystem::file_size(p1) == 0);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
  CHECK(error_of([] { write_trace({}, "/nonexistent/dir/x.trace"); }).code() == Errc::IoFailure);
  CHECK(error_of([] { load_scenario("/nonexistent/x.scn"); }).code() == Errc::IoFailure);
}

#pragma once

// Scenario files: a topology, policy toggles, a timed script of operations and
// assertions over the metrics those operations report.
//
//   [scenario]   name = ..., seed = N, max_events = N
//   [topology]   use <stock> [args] | host|router|gateway NAME ADDR... [gw=R]
//                | link A B [fiber] [encrypted] | lan ID MEMBER...
//   [policy]     NODE FLAG on|off | service NODE echo|chargen on|off
//                | synq NODE capacity=N timeout=N | storm NODE N
//                | dns NODE [ttl=N] [upstream=NODE] | record NODE NAME ADDR
//                | tunnel NODE name=T local=IP peer=IP remote=PREFIX
//   [firewall NAME gateway=NODE]   ruleset and firewall lines
//   [script]     TICK ACTION key=value... [as=LABEL]
//   [assert]     LABEL.METRIC OP VALUE

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netsec/simnet.hpp"

namespace netsec::scenario {

struct Step {
  int line = 0;
  std::uint64_t tick = 0;
  std::string action;
  std::string label;
  std::map<std::string, std::string> args;
};

struct PolicyLine {
  int line = 0;
  std::vector<std::string> words;
};

struct FirewallSection {
  int line = 0;
  std::string name;
  std::string gateway;
  std::string text;
};

enum class Comparator { Eq, Ne, Lt, Le, Gt, Ge };
std::string_view to_string(Comparator c);

struct Assertion {
  int line = 0;
  std::string metric;  // label.metric
  Comparator op = Comparator::Eq;
  std::string value;
  std::string text() const;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 1;
  std::uint64_t max_events = simnet::Network::kDefaultMaxEvents;
  simnet::TopologySpec topology;
  std::vector<PolicyLine> policy;
  std::vector<FirewallSection> firewalls;
  std::vector<Step> script;
  std::vector<Assertion> assertions;
};

/// Throws SyntaxError, UnknownAction, UnknownNodeRef; messages start with "line N:".
Scenario parse_scenario(const std::string& text);
/// Throws IoFailure, then as parse_scenario.
Scenario load_scenario(const std::string& path);

/// Script actions understood by the runner.
std::vector<std::string> action_names();

struct AssertionResult {
  Assertion assertion;
  bool passed = false;
  std::string actual;  // "<missing>" when the metric was never reported
};

struct RunResult {
  simnet::Trace trace;
  std::map<std::string, std::string> metrics;  // label.metric -> value
  std::vector<std::string> reports;             // one summary line per step
  std::vector<AssertionResult> assertions;
  int exit_status = 0;

  bool passed() const { return exit_status == 0; }
};

/// Builds the network, runs the script and evaluates the assertions. Operation
/// errors are recorded as `label.error` and never escape.
RunResult run_scenario(const Scenario& s);

/// 0 when every assertion holds, 1 otherwise.
int exit_status(const std::vector<AssertionResult>& results);

/// Throws IoFailure.
using simnet::write_trace;

}  // namespace netsec::scenario

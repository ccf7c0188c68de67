#pragma once

// Deterministic discrete-event fabric: nodes with one NIC each, point-to-point
// links and switched broadcast domains, taps, and a FIFO-at-equal-time
// scheduler that records every observable as a TraceEvent.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "netsec/packet.hpp"

namespace netsec::simnet {

enum class NodeKind { Host, Router, Gateway };
std::string_view to_string(NodeKind k);

struct NodeSpec {
  std::string name;
  NodeKind kind = NodeKind::Host;
  std::vector<IfAddr> addrs;
  std::optional<std::string> gateway;  // default route for hosts
};

struct LinkSpec {
  std::string a;
  std::string b;
  bool tappable = true;                // false models optical fiber
  std::optional<std::string> domain;   // links sharing a domain form one switched LAN
  bool encrypted = false;              // link-level encryption: wire image sealed per hop
};

struct TopologySpec {
  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;

  TopologySpec& host(std::string name, std::vector<std::string> addrs = {}, std::optional<std::string> gw = {});
  TopologySpec& router(std::string name, std::vector<std::string> addrs = {});
  TopologySpec& gateway(std::string name, std::vector<std::string> addrs = {});
  TopologySpec& link(std::string a, std::string b, bool tappable = true);
  /// Attaches every member to broadcast domain `id`.
  TopologySpec& lan(const std::string& id, const std::vector<std::string>& members);
};

struct Nic {
  HwAddr unicast{};
  std::set<HwAddr> multicast_set;
  bool promiscuous = false;
};

bool is_group_address(const HwAddr& hw);

/// Pure acceptance predicate of a NIC.
bool frame_accept(const Nic& nic, const Frame& frame);

enum class Action { Send, Recv, Drop, Note };
enum class Layer { Link, Internet, Transport, Application };
std::string_view to_string(Action a);
std::string_view to_string(Layer l);

struct TraceEvent {
  std::uint64_t time = 0;
  std::string node;
  Action action = Action::Note;
  Layer layer = Layer::Link;
  std::string detail;
  /// For link SENDs: exactly what was put on the wire.
  std::optional<Term> wire;

  /// time<TAB>node<TAB>ACTION<TAB>layer<TAB>detail
  std::string line() const;
};

using Trace = std::vector<TraceEvent>;

struct TraceFilter {
  std::optional<std::string> node;
  std::optional<Action> action;
  std::optional<Layer> layer;
  std::string contains;  // substring of detail; empty matches all
  std::size_t from_index = 0;
  bool matches(const TraceEvent& e) const;
};
std::size_t count_events(const Trace& t, const TraceFilter& f);

std::string render_trace(const Trace& t);
/// Throws IoFailure.
void write_trace(const Trace& t, const std::string& path);
std::vector<std::string> read_trace_lines(const std::string& path);

/// One transmission medium: a point-to-point link or a switched LAN.
struct Segment {
  std::string id;
  std::vector<std::string> members;
  bool is_domain = false;
  bool tappable = true;
  bool encrypted = false;
  symcrypto::Key link_key;
  std::map<HwAddr, std::string> stations;  // switch table for domains

  bool has(const std::string& node) const;
};

using TapHandle = std::size_t;

struct Capture {
  std::string observer;
  std::size_t segment = 0;
  std::vector<Frame> frames;
};

class Network {
 public:
  using Receiver = std::function<void(const std::string& node, const Frame& frame, std::size_t segment)>;
  /// Returns true to consume the frame before the receiver sees it.
  using Observer = std::function<bool(const Frame& frame, std::size_t segment)>;

  static constexpr std::uint64_t kDefaultMaxEvents = 10000;

  /// Throws DuplicateName, DanglingLink.
  explicit Network(TopologySpec spec, std::uint64_t seed = 0, std::uint64_t max_events = kDefaultMaxEvents);

  const TopologySpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t max_events() const { return max_events_; }
  void set_max_events(std::uint64_t n) { max_events_ = n; }
  std::uint64_t now() const { return now_; }

  bool has_node(const std::string& name) const { return index_.count(name) > 0; }
  /// Throws UnknownNode.
  const NodeSpec& node(const std::string& name) const;
  std::vector<std::string> node_names() const;
  Nic& nic(const std::string& name);
  const Nic& nic(const std::string& name) const;
  /// The address assigned at creation, i.e. what address resolution answers.
  HwAddr assigned_hw(const std::string& name) const;

  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& segment(std::size_t i) const { return segments_.at(i); }
  std::vector<std::size_t> segments_of(const std::string& node) const;
  /// A segment both nodes are attached to.
  std::optional<std::size_t> shared_segment(const std::string& a, const std::string& b) const;
  std::optional<std::size_t> find_domain(const std::string& id) const;
  /// Segment carrying the declared link a-b.
  std::optional<std::size_t> find_link(const std::string& a, const std::string& b) const;

  /// Throws LinkNotTappable, DanglingLink, UnknownNode.
  TapHandle attach_tap(const std::string& a, const std::string& b, const std::string& observer);
  TapHandle attach_segment_tap(std::size_t segment, const std::string& observer);
  const Capture& capture(TapHandle h) const { return captures_.at(h); }
  bool has_tap_on(std::size_t segment, const std::string& observer) const;
  std::vector<TapHandle> taps_of(const std::string& observer) const;

  /// Puts a frame on a segment now; deliveries happen one tick later.
  void transmit(const std::string& from, std::size_t segment, const Frame& frame);
  /// Like transmit, but only `to` is offered the frame (reinjection of a copy).
  void transmit_to(const std::string& from, std::size_t segment, const Frame& frame, const std::string& to);
  /// Schedules a transmission at `time`, truthful or not. Throws UnknownNode.
  void inject_frame(const std::string& at, const Frame& frame, std::uint64_t time);
  /// Throws UnknownNode.
  void reprogram_nic(const std::string& node, const HwAddr& hw);

  void set_receiver(Receiver r) { receiver_ = std::move(r); }
  void add_observer(const std::string& node, Observer o);

  void schedule(std::uint64_t time, std::function<void()> fn);
  void schedule_in(std::uint64_t delta, std::function<void()> fn) { schedule(now_ + delta, std::move(fn)); }
  bool idle() const { return queue_.empty(); }
  /// Processes queued items until none remain or the per-call budget is spent.
  /// Returns "idle" or "budget", which is also recorded as a final NOTE.
  std::string run_until_idle();

  void emit(const std::string& node, Action action, Layer layer, std::string detail,
            std::optional<Term> wire = std::nullopt);
  const Trace& trace() const { return trace_; }

 private:
  std::size_t idx(const std::string& name) const;
  void deliver(const std::string& to, std::size_t segment, const Frame& frame);
  Term wire_image(const Segment& s, const Frame& f) const;
  std::vector<std::string> recipients(const std::string& from, const Segment& s, const Frame& f) const;
  void emit_send(const std::string& from, std::size_t segment, const Frame& frame, const char* tag);

  TopologySpec spec_;
  std::uint64_t seed_;
  std::uint64_t max_events_;
  std::uint64_t now_ = 0;
  std::uint64_t next_seq_ = 0;

  std::map<std::string, std::size_t> index_;
  std::vector<Nic> nics_;
  std::vector<HwAddr> assigned_;
  std::vector<Segment> segments_;
  std::map<std::pair<std::string, std::string>, std::size_t> link_index_;
  std::vector<Capture> captures_;
  std::map<std::string, std::vector<Observer>> observers_;
  Receiver receiver_;

  std::map<std::pair<std::uint64_t, std::uint64_t>, std::function<void()>> queue_;
  Trace trace_;
};

}  // namespace netsec::simnet

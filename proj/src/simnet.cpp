#include "netsec/simnet.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "netsec/error.hpp"
#include "netsec/hash.hpp"

namespace netsec::simnet {

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Host: return "host";
    case NodeKind::Router: return "router";
    case NodeKind::Gateway: return "gateway";
  }
  return "?";
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::Send: return "SEND";
    case Action::Recv: return "RECV";
    case Action::Drop: return "DROP";
    case Action::Note: return "NOTE";
  }
  return "?";
}

std::string_view to_string(Layer l) {
  switch (l) {
    case Layer::Link: return "link";
    case Layer::Internet: return "internet";
    case Layer::Transport: return "transport";
    case Layer::Application: return "application";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Topology builder

namespace {
std::vector<IfAddr> parse_addrs(const std::vector<std::string>& addrs) {
  std::vector<IfAddr> out;
  for (const auto& a : addrs) {
    auto slash = a.find('/');
    IfAddr ia;
    ia.ip = IpAddr::parse(a.substr(0, slash));
    ia.len = slash == std::string::npos ? 24 : std::stoi(a.substr(slash + 1));
    out.push_back(ia);
  }
  return out;
}
}  // namespace

TopologySpec& TopologySpec::host(std::string name, std::vector<std::string> addrs, std::optional<std::string> gw) {
  nodes.push_back({std::move(name), NodeKind::Host, parse_addrs(addrs), std::move(gw)});
  return *this;
}

TopologySpec& TopologySpec::router(std::string name, std::vector<std::string> addrs) {
  nodes.push_back({std::move(name), NodeKind::Router, parse_addrs(addrs), std::nullopt});
  return *this;
}

TopologySpec& TopologySpec::gateway(std::string name, std::vector<std::string> addrs) {
  nodes.push_back({std::move(name), NodeKind::Gateway, parse_addrs(addrs), std::nullopt});
  return *this;
}

TopologySpec& TopologySpec::link(std::string a, std::string b, bool tappable) {
  links.push_back({std::move(a), std::move(b), tappable, std::nullopt, false});
  return *this;
}

TopologySpec& TopologySpec::lan(const std::string& id, const std::vector<std::string>& members) {
  if (members.empty()) return *this;
  for (std::size_t i = (members.size() == 1 ? 0 : 1); i < members.size(); ++i) {
    links.push_back({members[0], members[i], true, id, false});
  }
  return *this;
}

// ---------------------------------------------------------------------------
// NIC

bool is_group_address(const HwAddr& hw) { return (hw[0] & 0x01) != 0; }

bool frame_accept(const Nic& nic, const Frame& frame) {
  return frame.dst_hw == nic.unicast || nic.multicast_set.count(frame.dst_hw) > 0 ||
         frame.dst_hw == kBroadcastHw || nic.promiscuous;
}

bool Segment::has(const std::string& node) const {
  return std::find(members.begin(), members.end(), node) != members.end();
}

// ---------------------------------------------------------------------------
// Trace

std::string TraceEvent::line() const {
  std::string d = detail;
  for (auto& c : d) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  while (!d.empty() && d.back() == ' ') d.pop_back();
  std::string out = std::to_string(time) + "\t" + node + "\t" + std::string(to_string(action)) + "\t" +
                    std::string(to_string(layer)) + "\t" + d;
  while (!out.empty() && (out.back() == ' ' || out.back() == '\t')) out.pop_back();
  return out;
}

bool TraceFilter::matches(const TraceEvent& e) const {
  return (!node || e.node == *node) && (!action || e.action == *action) && (!layer || e.layer == *layer) &&
         (contains.empty() || e.detail.find(contains) != std::string::npos);
}

std::size_t count_events(const Trace& t, const TraceFilter& f) {
  std::size_t n = 0;
  for (std::size_t i = f.from_index; i < t.size(); ++i) n += f.matches(t[i]) ? 1 : 0;
  return n;
}

std::string render_trace(const Trace& t) {
  std::string out;
  for (const auto& e : t) {
    out += e.line();
    out += '\n';
  }
  return out;
}

void write_trace(const Trace& t, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::IoFailure, "cannot open " + path);
  f << render_trace(t);
  f.flush();
  if (!f) throw Error(Errc::IoFailure, "write failed: " + path);
}

std::vector<std::string> read_trace_lines(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::IoFailure, "cannot open " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(f, line);) out.push_back(line);
  return out;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(TopologySpec spec, std::uint64_t seed, std::uint64_t max_events)
    : spec_(std::move(spec)), seed_(seed), max_events_(max_events) {
  std::set<HwAddr> used;
  for (std::size_t i = 0; i < spec_.nodes.size(); ++i) {
    const auto& n = spec_.nodes[i];
    if (n.name.empty()) throw Error(Errc::InvalidArgument, "empty node name");
    if (!index_.emplace(n.name, i).second) throw Error(Errc::DuplicateName, n.name);
    // locally administered unicast, derived from the name only
    std::uint64_t h = fnv1a(n.name);
    HwAddr hw{};
    for (std::uint64_t attempt = 0;; ++attempt) {
      hw[0] = 0x02;
      for (int b = 0; b < 5; ++b) hw[1 + b] = static_cast<std::uint8_t>(h >> (8 * b));
      if (used.insert(hw).second) break;
      h = splitmix64(h + attempt);
    }
    Nic nic;
    nic.unicast = hw;
    nics_.push_back(nic);
    assigned_.push_back(hw);
  }

  std::map<std::string, std::size_t> domains;
  for (const auto& l : spec_.links) {
    if (!index_.count(l.a)) throw Error(Errc::DanglingLink, l.a + " in link " + l.a + "-" + l.b);
    if (!index_.count(l.b)) throw Error(Errc::DanglingLink, l.b + " in link " + l.a + "-" + l.b);
    std::size_t seg;
    if (l.domain) {
      auto it = domains.find(*l.domain);
      if (it == domains.end()) {
        Segment s;
        s.id = *l.domain;
        s.is_domain = true;
        s.tappable = l.tappable;
        s.encrypted = l.encrypted;
        segments_.push_back(s);
        it = domains.emplace(*l.domain, segments_.size() - 1).first;
      }
      seg = it->second;
      auto& s = segments_[seg];
      s.tappable = s.tappable && l.tappable;
      s.encrypted = s.encrypted || l.encrypted;
      for (const auto& m : {l.a, l.b}) {
        if (!s.has(m)) s.members.push_back(m);
      }
    } else {
      if (l.a == l.b) throw Error(Errc::DanglingLink, "self link on " + l.a);
      Segment s;
      s.id = l.a + "-" + l.b;
      s.members = {l.a, l.b};
      s.tappable = l.tappable;
      s.encrypted = l.encrypted;
      segments_.push_back(s);
      seg = segments_.size() - 1;
    }
    link_index_[{l.a, l.b}] = seg;
    link_index_[{l.b, l.a}] = seg;
  }
  for (auto& s : segments_) {
    s.link_key = symcrypto::Key{symcrypto::KeyKind::Symmetric, "link:" + s.id, 0, derive(seed_, s.id, 0)};
    if (s.is_domain) {
      for (const auto& m : s.members) s.stations[assigned_[idx(m)]] = m;
    }
  }
}

std::size_t Network::idx(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(Errc::UnknownNode, name);
  return it->second;
}

const NodeSpec& Network::node(const std::string& name) const { return spec_.nodes[idx(name)]; }

std::vector<std::string> Network::node_names() const {
  std::vector<std::string> out;
  for (const auto& n : spec_.nodes) out.push_back(n.name);
  return out;
}

Nic& Network::nic(const std::string& name) { return nics_[idx(name)]; }
const Nic& Network::nic(const std::string& name) const { return nics_[idx(name)]; }
HwAddr Network::assigned_hw(const std::string& name) const { return assigned_[idx(name)]; }

std::vector<std::size_t> Network::segments_of(const std::string& node) const {
  idx(node);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].has(node)) out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> Network::shared_segment(const std::string& a, const std::string& b) const {
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].has(a) && segments_[i].has(b)) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Network::find_domain(const std::string& id) const {
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].is_domain && segments_[i].id == id) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Network::find_link(const std::string& a, const std::string& b) const {
  auto it = link_index_.find({a, b});
  if (it != link_index_.end()) return it->second;
  auto s = shared_segment(a, b);
  if (s && segments_[*s].is_domain) return s;
  return std::nullopt;
}

TapHandle Network::attach_tap(const std::string& a, const std::string& b, const std::string& observer) {
  idx(observer);
  auto seg = find_link(a, b);
  if (!seg) throw Error(Errc::DanglingLink, "no link " + a + "-" + b);
  return attach_segment_tap(*seg, observer);
}

TapHandle Network::attach_segment_tap(std::size_t segment, const std::string& observer) {
  idx(observer);
  const auto& s = segments_.at(segment);
  if (!s.tappable) throw Error(Errc::LinkNotTappable, s.id);
  captures_.push_back({observer, segment, {}});
  return captures_.size() - 1;
}

bool Network::has_tap_on(std::size_t segment, const std::string& observer) const {
  return std::any_of(captures_.begin(), captures_.end(),
                     [&](const Capture& c) { return c.segment == segment && c.observer == observer; });
}

std::vector<TapHandle> Network::taps_of(const std::string& observer) const {
  std::vector<TapHandle> out;
  for (std::size_t i = 0; i < captures_.size(); ++i) {
    if (captures_[i].observer == observer) out.push_back(i);
  }
  return out;
}

void Network::add_observer(const std::string& node, Observer o) {
  idx(node);
  observers_[node].push_back(std::move(o));
}

Term Network::wire_image(const Segment& s, const Frame& f) const {
  auto image = datagram_to_term(f.dgram);
  if (s.encrypted) return symcrypto::seal(s.link_key, image);
  return image;
}

std::vector<std::string> Network::recipients(const std::string& from, const Segment& s, const Frame& f) const {
  std::vector<std::string> out;
  auto add = [&](const std::string& n) {
    if (n != from && std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
  };
  if (!s.is_domain || is_group_address(f.dst_hw)) {
    for (const auto& m : s.members) add(m);
    return out;
  }
  auto st = s.stations.find(f.dst_hw);
  if (st == s.stations.end()) {
    for (const auto& m : s.members) add(m);  // unknown destination: flood
    return out;
  }
  for (const auto& m : s.members) {
    if (m == st->second || nics_[idx(m)].promiscuous) add(m);
  }
  return out;
}

void Network::emit_send(const std::string& from, std::size_t segment, const Frame& frame, const char* tag) {
  const auto& s = segments_[segment];
  std::string detail = s.id + " " + hw_to_string(frame.src_hw) + ">" + hw_to_string(frame.dst_hw);
  if (*tag) detail += std::string(" ") + tag;
  detail += " " + (s.encrypted ? std::string("encrypted ") + wire_image(s, frame).render() : summarize(frame.dgram));
  emit(from, Action::Send, Layer::Link, std::move(detail), wire_image(s, frame));
  for (auto& c : captures_) {
    if (c.segment != segment) continue;
    c.frames.push_back(frame);
    emit(c.observer, Action::Note, Layer::Link, "capture " + s.id + " #" + std::to_string(c.frames.size()));
  }
}

void Network::transmit(const std::string& from, std::size_t segment, const Frame& frame) {
  const auto& s = segments_.at(segment);
  emit_send(from, segment, frame, "");
  for (const auto& to : recipients(from, s, frame)) {
    schedule(now_ + 1, [this, to, segment, frame] { deliver(to, segment, frame); });
  }
}

void Network::transmit_to(const std::string& from, std::size_t segment, const Frame& frame, const std::string& to) {
  if (!segments_.at(segment).has(to)) throw Error(Errc::NotNeighbor, to + " not on " + segments_[segment].id);
  emit_send(from, segment, frame, "copy");
  schedule(now_ + 1, [this, to, segment, frame] { deliver(to, segment, frame); });
}

void Network::inject_frame(const std::string& at, const Frame& frame, std::uint64_t time) {
  auto segs = segments_of(at);
  if (segs.empty()) throw Error(Errc::NotNeighbor, at + " has no links");
  std::size_t seg = segs.front();
  for (auto s : segs) {
    const auto& sg = segments_[s];
    auto st = sg.stations.find(frame.dst_hw);
    bool owner_here = (st != sg.stations.end()) ||
                      std::any_of(sg.members.begin(), sg.members.end(),
                                  [&](const std::string& m) { return m != at && assigned_[idx(m)] == frame.dst_hw; });
    if (owner_here) {
      seg = s;
      break;
    }
  }
  schedule(time, [this, at, seg, frame] { transmit(at, seg, frame); });
}

void Network::reprogram_nic(const std::string& node, const HwAddr& hw) {
  nic(node).unicast = hw;
  for (auto& s : segments_) {
    if (s.is_domain && s.has(node)) s.stations[hw] = node;
  }
  emit(node, Action::Note, Layer::Link, "nic-reprogrammed " + hw_to_string(hw));
}

void Network::deliver(const std::string& to, std::size_t segment, const Frame& frame) {
  const auto& s = segments_[segment];
  if (!frame_accept(nics_[idx(to)], frame)) {
    emit(to, Action::Drop, Layer::Link, "hw-filter " + s.id + " dst=" + hw_to_string(frame.dst_hw));
    return;
  }
  emit(to, Action::Recv, Layer::Link, s.id + " " + hw_to_string(frame.src_hw) + ">" + hw_to_string(frame.dst_hw));
  auto it = observers_.find(to);
  if (it != observers_.end()) {
    // copy: an observer may register further observers
    auto obs = it->second;
    for (auto& o : obs) {
      if (o(frame, segment)) return;
    }
  }
  if (receiver_) receiver_(to, frame, segment);
}

void Network::schedule(std::uint64_t time, std::function<void()> fn) {
  if (time < now_) throw Error(Errc::InvalidArgument, "cannot schedule in the past");
  queue_.emplace(std::make_pair(time, next_seq_++), std::move(fn));
}

std::string Network::run_until_idle() {
  std::uint64_t processed = 0;
  while (!queue_.empty() && processed < max_events_) {
    auto it = queue_.begin();
    now_ = it->first.first;
    auto fn = std::move(it->second);
    queue_.erase(it);
    ++processed;
    fn();
  }
  std::string reason = queue_.empty() ? "idle" : "budget";
  emit("sim", Action::Note, Layer::Link, reason);
  return reason;
}

void Network::emit(const std::string& node, Action action, Layer layer, std::string detail,
                   std::optional<Term> wire) {
  trace_.push_back({now_, node, action, layer, std::move(detail), std::move(wire)});
}

}  // namespace netsec::simnet

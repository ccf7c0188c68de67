#include "netsec/secmail.hpp"

#include <map>

#include "netsec/error.hpp"
#include "netsec/stack.hpp"

namespace netsec::secmail {

using simnet::Layer;
using symcrypto::digest;
using symcrypto::open;
using symcrypto::seal;

std::string_view to_string(Scheme s) { return s == Scheme::PgpStyle ? "pgp" : "smime"; }

Term MailEnvelope::to_term() const {
  std::vector<Term> items{Term::plain(std::string(to_string(scheme))), Term::plain(outer_header)};
  items.insert(items.end(), components.begin(), components.end());
  return Term::tuple(items);
}

MailEnvelope MailEnvelope::from_term(const Term& t) {
  if (!t.is(Term::Kind::Pair) || !t.left().is(Term::Kind::Plain)) throw Error(Errc::InvalidArgument, "not an envelope");
  MailEnvelope env;
  const auto& tag = t.left().bytes();
  if (tag == "pgp") env.scheme = Scheme::PgpStyle;
  else if (tag == "smime") env.scheme = Scheme::Smime;
  else throw Error(Errc::InvalidArgument, "unknown envelope scheme " + tag);
  const std::size_t n = env.scheme == Scheme::PgpStyle ? 2 : 4;
  auto items = t.untuple(n + 2);
  if (!items[1].is(Term::Kind::Plain)) throw Error(Errc::InvalidArgument, "envelope header is not plaintext");
  env.outer_header = items[1].bytes();
  env.components.assign(items.begin() + 2, items.end());
  return env;
}

std::string MailEnvelope::render() const {
  std::string out = std::string(to_string(scheme)) + " header=" + outer_header + "\n";
  for (std::size_t i = 0; i < components.size(); ++i) {
    out += "  " + std::to_string(i + 1) + ": " + components[i].render() + "\n";
  }
  return out;
}

namespace {

Term message(const std::string& header, const std::string& body) {
  return Term::pair(Term::plain(header), Term::plain(body));
}

std::pair<std::string, std::string> unmessage(const Term& t) {
  if (!t.is(Term::Kind::Pair) || !t.left().is(Term::Kind::Plain) || !t.right().is(Term::Kind::Plain)) {
    throw Error(Errc::KeyMismatch, "sealed body is not a message");
  }
  return {t.left().bytes(), t.right().bytes()};
}

void require_scheme(const MailEnvelope& env, Scheme s, std::size_t n) {
  if (env.scheme != s || env.components.size() != n) {
    throw Error(Errc::InvalidArgument, "expected a " + std::string(to_string(s)) + " envelope with " +
                                           std::to_string(n) + " components");
  }
}

std::optional<Term> try_open(const Key& k, const Term& t) {
  try {
    return open(k, t);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

MailEnvelope pgp_seal(const MailParty& sender, const Key& receiver_pub, const std::string& header,
                      const std::string& body) {
  MailEnvelope env;
  env.scheme = Scheme::PgpStyle;
  env.outer_header = header;
  env.components = {seal(receiver_pub, sender.cert), seal(receiver_pub, seal(sender.keys.prv, message(header, body)))};
  return env;
}

PgpOpened pgp_open(const Key& receiver_prv, const TrustStore& store, const MailEnvelope& env) {
  require_scheme(env, Scheme::PgpStyle, 2);
  const Term cert = open(receiver_prv, env.components[0]);
  bool trusted = false;
  try {
    trusted = symcrypto::cert_verify(store, cert);
  } catch (const Error&) {
    trusted = false;
  }
  if (!trusted) throw Error(Errc::CertRejected, "sender certificate not trusted");
  PgpOpened out;
  out.sender = cert.cert_subject();
  const Term signed_part = open(receiver_prv, env.components[1]);
  auto inner = try_open(cert.cert_key(), signed_part);
  if (!inner) return out;
  auto [header, body] = unmessage(*inner);
  if (header != env.outer_header) {
    throw Error(Errc::HeaderMismatch, "outer header '" + env.outer_header + "' vs sealed '" + header + "'");
  }
  out.header = header;
  out.body = body;
  out.non_repudiation_ok = true;
  return out;
}

MailEnvelope smime_seal(const MailParty& sender, const Key& receiver_pub, const std::string& header,
                        const std::string& body, KeyFactory& keys) {
  const Key k = keys.keygen_symmetric("smime-" + sender.name);
  const Term msg = message(header, body);
  MailEnvelope env;
  env.scheme = Scheme::Smime;
  env.outer_header = header;
  env.components = {seal(k, msg), seal(receiver_pub, Term::key_value(k)), seal(sender.keys.prv, digest(msg)),
                    seal(receiver_pub, sender.cert)};
  return env;
}

SmimeOpened smime_open(const Key& receiver_prv, const TrustStore& store, const MailEnvelope& env) {
  require_scheme(env, Scheme::Smime, 4);
  const Term k = open(receiver_prv, env.components[1]);
  if (!k.is(Term::Kind::KeyValue)) throw Error(Errc::KeyMismatch, "component 2 carries no session key");
  const Term msg = open(k.carried_key(), env.components[0]);
  auto [header, body] = unmessage(msg);
  if (header != env.outer_header) {
    throw Error(Errc::HeaderMismatch, "outer header '" + env.outer_header + "' vs sealed '" + header + "'");
  }
  SmimeOpened out;
  out.header = header;
  out.body = body;
  // verify the certificate first, then use its key on component 3
  auto cert = try_open(receiver_prv, env.components[3]);
  bool cert_ok = false;
  if (cert && cert->is(Term::Kind::Cert)) {
    out.sender = cert->cert_subject();
    cert_ok = symcrypto::cert_verify(store, *cert);
  }
  std::optional<Term> hash;
  if (cert && cert->is(Term::Kind::Cert)) hash = try_open(cert->cert_key(), env.components[2]);
  out.integrity_ok = hash && *hash == digest(msg);
  out.sender_ok = cert_ok && hash.has_value();
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(KeyMode m) {
  switch (m) {
    case KeyMode::Link: return "link";
    case KeyMode::E2eSymmetric: return "e2e_symmetric";
    case KeyMode::E2ePublic: return "e2e_public";
  }
  return "?";
}

KeyMode key_mode_from(const std::string& name) {
  for (auto m : {KeyMode::Link, KeyMode::E2eSymmetric, KeyMode::E2ePublic}) {
    if (name == to_string(m)) return m;
  }
  throw Error(Errc::InvalidArgument, "unknown key mode " + name);
}

std::uint64_t key_count(KeyMode mode, std::uint64_t count) {
  if (count < 1) throw Error(Errc::InvalidArgument, "count must be at least 1");
  if (mode == KeyMode::E2ePublic) return 2 * count;
  return count * (count - 1) / 2;
}

std::string_view to_string(ProtectionMode m) { return m == ProtectionMode::Link ? "link" : "e2e"; }

bool ExposureReport::plaintext_at(const std::string& node, Layer layer) const {
  for (const auto& e : exposure) {
    if (e.node == node && e.layer == layer) return e.plaintext;
  }
  return false;
}

std::vector<std::string> ExposureReport::render() const {
  std::vector<std::string> out;
  for (const auto& e : exposure) {
    out.push_back(e.node + " " + std::string(simnet::to_string(e.layer)) + " " + (e.plaintext ? "plain" : "sealed"));
  }
  return out;
}

namespace {

constexpr Layer kEndpointLayers[] = {Layer::Application, Layer::Transport, Layer::Internet, Layer::Link};
constexpr Layer kRouterLayers[] = {Layer::Internet, Layer::Link};

void check_path(const std::vector<std::string>& path) {
  if (path.size() < 2) throw Error(Errc::PathTooShort, "a path needs two endpoints");
}

}  // namespace

ExposureReport exposure_report(const std::vector<std::string>& path, ProtectionMode mode) {
  check_path(path);
  ExposureReport r;
  r.mode = mode;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const bool endpoint = i == 0 || i + 1 == path.size();
    if (endpoint) {
      for (auto l : kEndpointLayers) {
        r.exposure.push_back({path[i], l, mode == ProtectionMode::Link || l == Layer::Application});
      }
    } else {
      for (auto l : kRouterLayers) r.exposure.push_back({path[i], l, mode == ProtectionMode::Link});
    }
  }
  return r;
}

SimulatedExposure simulate_exposure(const std::vector<std::string>& path, ProtectionMode mode,
                                    const std::string& header, const std::string& body, std::uint64_t seed) {
  check_path(path);
  const std::size_t n = path.size();
  auto net_of = [](std::size_t seg) { return "10.0." + std::to_string(seg) + "."; };
  simnet::TopologySpec spec;
  if (n == 2) {
    spec.host(path[0], {net_of(1) + "10/24"}).host(path[1], {net_of(1) + "20/24"});
  } else {
    spec.host(path[0], {net_of(1) + "10/24"}, path[1]);
    for (std::size_t j = 1; j + 1 < n; ++j) spec.router(path[j], {net_of(j) + "2/24", net_of(j + 1) + "1/24"});
    spec.host(path[n - 1], {net_of(n - 1) + "10/24"}, path[n - 2]);
  }
  for (std::size_t j = 0; j + 1 < n; ++j) {
    spec.link(path[j], path[j + 1]);
    spec.links.back().encrypted = mode == ProtectionMode::Link;
  }

  stack::Internetwork inet(spec, seed);
  inet.converge();
  const auto start = inet.net().trace().size();

  std::map<std::pair<std::string, Layer>, bool> seen;
  auto mark = [&](const std::string& node, Layer l, bool plain) {
    auto& v = seen[{node, l}];
    v = v || plain;
  };
  auto observe = [&](bool endpoint) {
    return [&, endpoint](stack::Internetwork&, const std::string& node, IpDatagram& d) {
      const bool dgram_plain = symcrypto::exposes_text(datagram_to_term(d), body);
      // link encryption is undone inside the NIC, so the link layer handles the datagram image
      mark(node, Layer::Link, dgram_plain);
      mark(node, Layer::Internet, dgram_plain);
      if (endpoint) mark(node, Layer::Transport, symcrypto::exposes_text(transport_to_term(d.payload), body));
      return stack::HookResult::Pass;
    };
  };
  inet.add_hook(path.front(), stack::HookPoint::Outbound, observe(true));
  inet.add_hook(path.back(), stack::HookPoint::Inbound, observe(true));
  for (std::size_t j = 1; j + 1 < n; ++j) inet.add_hook(path[j], stack::HookPoint::Transit, observe(false));

  MailParty sender{path.front(), inet.keys().keygen_pair(path.front()), {}};
  sender.cert = symcrypto::cert_issue("Mail-CA", sender.name, sender.keys.pub);
  const auto receiver = inet.keys().keygen_pair(path.back());
  TrustStore store;
  store.trusted_issuers = {"Mail-CA"};

  constexpr std::uint16_t kMailPort = 25;
  inet.bind_app(path.back(), kMailPort);
  const Term payload = mode == ProtectionMode::Link
                           ? message(header, body)
                           : smime_seal(sender, receiver.pub, header, body, inet.keys()).to_term();
  mark(path.front(), Layer::Application, true);  // the author typed it
  inet.send_udp(path.front(), inet.primary_ip(path.back()), kMailPort, kMailPort, payload);
  inet.run();

  SimulatedExposure out;
  const auto& box = inet.inbox(path.back(), kMailPort);
  if (!box.empty()) {
    try {
      std::string got;
      if (mode == ProtectionMode::Link) {
        got = unmessage(box.back().data).second;
      } else {
        auto opened = smime_open(receiver.prv, store, MailEnvelope::from_term(box.back().data));
        if (opened.integrity_ok && opened.sender_ok) got = opened.body;
      }
      out.delivered = got == body;
    } catch (const Error&) {
      out.delivered = false;
    }
  }
  mark(path.back(), Layer::Application, out.delivered);

  const auto& trace = inet.net().trace();
  for (std::size_t i = start; i < trace.size(); ++i) {
    const auto& e = trace[i];
    if (e.action != simnet::Action::Send || e.layer != Layer::Link || !e.wire) continue;
    ++out.wire_sends;
    if (symcrypto::exposes_text(*e.wire, body)) ++out.wire_plaintext_sends;
  }

  out.report.mode = mode;
  for (std::size_t i = 0; i < n; ++i) {
    const bool endpoint = i == 0 || i + 1 == n;
    if (endpoint) {
      for (auto l : kEndpointLayers) out.report.exposure.push_back({path[i], l, seen[{path[i], l}]});
    } else {
      for (auto l : kRouterLayers) out.report.exposure.push_back({path[i], l, seen[{path[i], l}]});
    }
  }
  out.trace.assign(trace.begin() + static_cast<std::ptrdiff_t>(start), trace.end());
  return out;
}

}  // namespace netsec::secmail

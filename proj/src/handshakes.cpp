#include "netsec/handshakes.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include "netsec/error.hpp"
#include "netsec/hash.hpp"

namespace netsec::handshakes {

using symcrypto::digest;
using symcrypto::open;
using symcrypto::seal;

namespace {

[[noreturn]] void abort_at(Channel& ch, const std::string& node, const char* proto, Errc code,
                           const std::string& why) {
  ch.note(node, std::string(proto) + " abort " + std::string(to_string(code)) + " " + why);
  throw Error(code, why);
}

// "k=v" words inside a plaintext
std::map<std::string, std::string> fields(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  for (std::string w; in >> w;) {
    auto eq = w.find('=');
    if (eq != std::string::npos) out[w.substr(0, eq)] = w.substr(eq + 1);
  }
  return out;
}

std::optional<std::uint64_t> number(const std::string& s) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
    return std::nullopt;
  }
  try {
    return std::stoull(s);
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (const auto& x : v) {
    if (!out.empty()) out += sep;
    out += x;
  }
  return out;
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::optional<Term> try_open(const Key& k, const std::optional<Term>& t) {
  if (!t) return std::nullopt;
  try {
    return open(k, *t);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::optional<std::vector<Term>> try_untuple(const std::optional<Term>& t, std::size_t n) {
  if (!t) return std::nullopt;
  try {
    return t->untuple(n);
  } catch (const Error&) {
    return std::nullopt;
  }
}

bool is_plain(const Term& t) { return t.is(Term::Kind::Plain); }

Term ts_term(std::uint64_t ts) { return Term::plain("ts=" + std::to_string(ts)); }

std::optional<std::uint64_t> ts_of(const Term& t) {
  if (!is_plain(t) || t.bytes().rfind("ts=", 0) != 0) return std::nullopt;
  return number(t.bytes().substr(3));
}

}  // namespace

// ---------------------------------------------------------------------------
// SSH

std::string_view to_string(SshPhase p) {
  switch (p) {
    case SshPhase::Identify: return "identify";
    case SshPhase::Negotiate: return "negotiate";
    case SshPhase::Authenticate: return "authenticate";
    case SshPhase::Ready: return "ready";
  }
  return "?";
}

std::optional<std::string> choose_algorithm(const std::vector<RankedAlg>& offered,
                                            const std::set<std::string>& supported) {
  const RankedAlg* best = nullptr;
  for (const auto& a : offered) {
    if (!supported.count(a.name)) continue;
    if (!best || a.rank > best->rank || (a.rank == best->rank && a.name < best->name)) best = &a;
  }
  if (!best) return std::nullopt;
  return best->name;
}

void SshServer::add_user(const std::string& user, const std::string& password) {
  credentials[user] = symcrypto::password_key(user, password);
}

namespace {

void require_phase(const SshSession& s, SshPhase want) {
  if (s.phase != want) {
    throw Error(Errc::InvalidArgument, "ssh phase is " + std::string(to_string(s.phase)) + ", expected " +
                                           std::string(to_string(want)));
  }
}

// Server replies are signed with its private host key and carry a digest of
// the client message they answer.
Term signed_reply(const SshServer& s, const std::string& text, const std::optional<Term>& answered) {
  return seal(s.host_keys.prv, Term::tuple({Term::plain(text), digest(answered.value_or(Term::plain("")))}));
}

std::string check_signed(Channel& ch, const SshClient& c, const SshSession& session, const std::optional<Term>& got,
                         const Term& sent) {
  auto body = try_untuple(try_open(*session.server_key, got), 2);
  if (!body || !is_plain((*body)[0])) abort_at(ch, c.name, "ssh", Errc::HostKeyRejected, "reply not signed by host key");
  if ((*body)[1] != digest(sent)) abort_at(ch, c.name, "ssh", Errc::HostKeyRejected, "reply answers another message");
  return (*body)[0].bytes();
}

}  // namespace

void ssh_identify(SshClient& c, SshServer& s, Channel& ch, SshSession& session) {
  require_phase(session, SshPhase::Identify);
  const auto got =
      ch.deliver(s.name, c.name, "ssh-hostkey", Term::pair(Term::plain(s.name), Term::key_value(s.host_keys.pub)));
  if (!got || !got->is(Term::Kind::Pair) || !is_plain(got->left()) || got->left().bytes() != s.name ||
      !got->right().is(Term::Kind::KeyValue)) {
    abort_at(ch, c.name, "ssh", Errc::HostKeyRejected, "malformed host key message");
  }
  const Key offered = got->right().carried_key();
  if (auto pinned = c.store.known_host(s.name)) {
    if (*pinned != offered) {
      abort_at(ch, c.name, "ssh", Errc::HostKeyRejected,
               s.name + " presented " + offered.label() + ", known_hosts has " + pinned->label());
    }
    session.peer_verified = true;
  } else {
    ch.note(c.name, "unknown-host " + s.name + " " + offered.label());
    if (!c.accept_unknown) abort_at(ch, c.name, "ssh", Errc::HostKeyRejected, s.name + " not in known_hosts");
    c.store.remember_host(s.name, offered);
  }
  session.server_key = offered;

  auto known = s.known_clients.find(c.name);
  if (known != s.known_clients.end()) {
    const std::string nonce = "nonce-" + hex32(static_cast<std::uint32_t>(
                                             derive(fnv1a(s.name), "ssh-challenge:" + c.name, ch.now())));
    const auto chal = ch.deliver(s.name, c.name, "ssh-challenge", seal(known->second, Term::plain(nonce)));
    const auto inner = try_open(c.host_keys.prv, chal);
    if (!inner) abort_at(ch, c.name, "ssh", Errc::ChallengeFailed, "challenge not sealed for this host");
    const auto back = ch.deliver(c.name, s.name, "ssh-challenge-reply", seal(offered, *inner));
    const auto answer = try_open(s.host_keys.prv, back);
    if (!answer || *answer != Term::plain(nonce)) {
      abort_at(ch, s.name, "ssh", Errc::ChallengeFailed, "client did not return the nonce");
    }
    session.client_verified = true;
    ch.note(s.name, "ssh client-host verified " + c.name);
  }
  session.phase = SshPhase::Negotiate;
}

void ssh_negotiate(SshClient& c, SshServer& s, Channel& ch, KeyFactory& keys, SshSession& session) {
  require_phase(session, SshPhase::Negotiate);
  std::vector<std::string> items;
  for (const auto& a : c.offered) items.push_back(a.name + ":" + std::to_string(a.rank));
  const Term offer = seal(*session.server_key, Term::plain("offer " + join(items, ',')));
  const auto got = ch.deliver(c.name, s.name, "ssh-offer", offer);

  // server side: work from whatever arrived
  std::vector<RankedAlg> seen;
  if (auto text = try_open(s.host_keys.prv, got); text && is_plain(*text) && text->bytes().rfind("offer ", 0) == 0) {
    for (const auto& item : split(text->bytes().substr(6), ',')) {
      auto colon = item.rfind(':');
      if (colon == std::string::npos) continue;
      auto r = number(item.substr(colon + 1));
      if (r) seen.push_back({item.substr(0, colon), static_cast<int>(*r)});
    }
  }
  const auto choice = choose_algorithm(seen, s.supported);
  const auto reply = ch.deliver(s.name, c.name, "ssh-choice", signed_reply(s, "choice " + choice.value_or("-"), got));

  const auto said = check_signed(ch, c, session, reply, offer);
  const auto alg = said.substr(said.find(' ') + 1);
  if (alg == "-") abort_at(ch, c.name, "ssh", Errc::NoCommonAlgorithm, "no common algorithm with " + s.name);
  if (std::none_of(c.offered.begin(), c.offered.end(), [&](const RankedAlg& a) { return a.name == alg; })) {
    abort_at(ch, c.name, "ssh", Errc::NoCommonAlgorithm, "server chose unoffered " + alg);
  }
  session.chosen_alg = alg;

  const Key sk = keys.keygen_symmetric("ssh-" + c.name);
  const Term notify = seal(*session.server_key, Term::key_value(sk));
  const auto got_key = ch.deliver(c.name, s.name, "ssh-session-key", notify);
  if (auto k = try_open(s.host_keys.prv, got_key); k && k->is(Term::Kind::KeyValue)) {
    session.server_session_key = k->carried_key();
  }
  const auto ack = ch.deliver(s.name, c.name, "ssh-key-ack", signed_reply(s, "key-ok", got_key));
  check_signed(ch, c, session, ack, notify);
  session.session_key = sk;
  ch.note(c.name, "ssh negotiated " + alg);
  session.phase = SshPhase::Authenticate;
}

void ssh_authenticate(SshClient& c, SshServer& s, Channel& ch, SshSession& session) {
  require_phase(session, SshPhase::Authenticate);
  const Term creds = seal(*session.server_key, Term::tuple({Term::plain(c.username), Term::plain(c.password)}));
  const auto got = ch.deliver(c.name, s.name, "ssh-auth", creds);

  bool ok = false;
  std::string user;
  if (auto parts = try_untuple(try_open(s.host_keys.prv, got), 2);
      parts && is_plain((*parts)[0]) && is_plain((*parts)[1])) {
    user = (*parts)[0].bytes();
    auto it = s.credentials.find(user);
    ok = it != s.credentials.end() && it->second == symcrypto::password_key(user, (*parts)[1].bytes());
  }
  ch.note(s.name, std::string("ssh auth ") + (ok ? "accepted " : "rejected ") + user);
  const auto reply = ch.deliver(s.name, c.name, "ssh-auth-result", signed_reply(s, ok ? "auth-ok" : "auth-reject", got));
  if (check_signed(ch, c, session, reply, creds) != "auth-ok") {
    abort_at(ch, c.name, "ssh", Errc::BadCredentials, "server rejected " + c.username);
  }
  session.user = c.username;
  session.phase = SshPhase::Ready;
  ch.note(c.name, "ssh ready " + s.name + " alg=" + session.chosen_alg);
}

SshSession ssh_connect(SshClient& c, SshServer& s, Channel& ch, KeyFactory& keys) {
  SshSession session;
  ssh_identify(c, s, ch, session);
  ssh_negotiate(c, s, ch, keys, session);
  ssh_authenticate(c, s, ch, session);
  return session;
}

// ---------------------------------------------------------------------------
// TLS

std::string version_name(int v) { return "v" + std::to_string(v / 10) + "." + std::to_string(v % 10); }

namespace {

// digest of the ordered message fold
struct Transcript {
  Term acc = Term::plain("transcript");
  void add(const Term& m) { acc = Term::pair(acc, m); }
  Term hash() const { return digest(acc); }
};

std::optional<std::map<std::string, std::string>> hello_fields(const std::optional<Term>& t, std::size_t n,
                                                               const std::string& kind) {
  auto parts = try_untuple(t, n);
  if (!parts) return std::nullopt;
  std::string text;
  for (const auto& p : *parts) {
    if (!is_plain(p)) return std::nullopt;
    text += p.bytes() + " ";
  }
  if ((*parts)[0].bytes() != kind) return std::nullopt;
  return fields(text);
}

}  // namespace

TlsSession tls_handshake(TlsEndpoint& client, TlsEndpoint& server, Channel& ch, KeyFactory& keys, bool mutual) {
  TlsSession out;
  out.mutual = mutual;
  Transcript tc, ts;  // each side's own view
  const auto& cn = client.name;
  const auto& sn = server.name;
  auto send = [&](const std::string& from, const std::string& to, const char* label, const Term& m) {
    (from == cn ? tc : ts).add(m);
    auto got = ch.deliver(from, to, label, m);
    if (got) (from == cn ? ts : tc).add(*got);
    return got;
  };

  // ClientHello
  const auto cr = static_cast<std::uint32_t>(derive(keys.seed(), "tls-random:" + cn + ">" + sn, ch.now()));
  out.client_random = cr;
  const auto ch_got = send(cn, sn, "client-hello",
                           Term::tuple({Term::plain("client-hello"), Term::plain("min=" + std::to_string(client.min_version)),
                                        Term::plain("max=" + std::to_string(client.max_version)),
                                        Term::plain("random=" + hex32(cr)), Term::plain("suites=" + join(client.suites, ','))}));
  auto hello = hello_fields(ch_got, 5, "client-hello");
  if (!hello) abort_at(ch, sn, "tls", Errc::FinishedMismatch, "malformed client hello");
  const auto cmin = number((*hello)["min"]).value_or(0);
  const auto cmax = number((*hello)["max"]).value_or(0);
  const std::uint64_t version = std::min<std::uint64_t>(cmax, server.max_version);
  if (version < std::max<std::uint64_t>(cmin, server.min_version)) {
    abort_at(ch, sn, "tls", Errc::VersionMismatch,
             "client " + version_name(int(cmin)) + "-" + version_name(int(cmax)) + ", server " +
                 version_name(server.min_version) + "-" + version_name(server.max_version));
  }
  std::string suite;
  for (const auto& s : split((*hello)["suites"], ',')) {
    if (std::find(server.suites.begin(), server.suites.end(), s) != server.suites.end()) {
      suite = s;
      break;
    }
  }
  if (suite.empty()) abort_at(ch, sn, "tls", Errc::NoCommonSuite, "no suite in common with " + cn);
  const std::string seen_cr = (*hello)["random"];

  // ServerHello, Certificate, [CertificateRequest], ServerHelloDone
  const auto sr = static_cast<std::uint32_t>(derive(keys.seed(), "tls-random:" + sn + "<" + cn, ch.now()));
  out.server_random = sr;
  const auto sh_got = send(sn, cn, "server-hello",
                           Term::tuple({Term::plain("server-hello"), Term::plain("version=" + std::to_string(version)),
                                        Term::plain("random=" + hex32(sr)), Term::plain("suite=" + suite)}));
  auto sh = hello_fields(sh_got, 4, "server-hello");
  if (!sh) abort_at(ch, cn, "tls", Errc::FinishedMismatch, "malformed server hello");
  const auto v = number((*sh)["version"]).value_or(0);
  if (v < static_cast<std::uint64_t>(client.min_version) || v > static_cast<std::uint64_t>(client.max_version)) {
    abort_at(ch, cn, "tls", Errc::VersionMismatch, "server picked " + version_name(int(v)));
  }
  out.version = static_cast<int>(v);
  out.cipher_suite = (*sh)["suite"];
  const std::string seen_sr = (*sh)["random"];

  const auto cert = send(sn, cn, "certificate", server.cert);
  bool cert_ok = false;
  try {
    cert_ok = cert && symcrypto::cert_verify(client.store, *cert) && cert->cert_subject() == sn;
  } catch (const Error&) {
    cert_ok = false;
  }
  if (!cert_ok) abort_at(ch, cn, "tls", Errc::CertRejected, "server certificate not trusted");
  const Key server_pk = cert->cert_key();
  if (mutual) send(sn, cn, "certificate-request", Term::plain("certificate-request"));
  send(sn, cn, "server-hello-done", Term::plain("server-hello-done"));

  // client flight
  if (mutual) {
    const auto ccert = send(cn, sn, "client-certificate", client.cert);
    bool ok = false;
    try {
      ok = ccert && symcrypto::cert_verify(server.store, *ccert) && ccert->cert_subject() == cn;
    } catch (const Error&) {
      ok = false;
    }
    if (!ok) abort_at(ch, sn, "tls", Errc::CertRejected, "client certificate not trusted");
    const Term expect = ts.hash();
    const auto verify = send(cn, sn, "certificate-verify", seal(client.keys.prv, tc.hash()));
    const auto body = try_open(ccert->cert_key(), verify);
    if (!body || *body != expect) abort_at(ch, sn, "tls", Errc::FinishedMismatch, "certificate verify failed");
  }
  const Key k = keys.keygen_symmetric("tls-" + cn);
  const auto kx = send(cn, sn, "client-key-exchange",
                       seal(server_pk, Term::tuple({Term::key_value(k), Term::plain(hex32(cr)),
                                                    Term::plain(seen_sr)})));
  auto kx_body = try_untuple(try_open(server.keys.prv, kx), 3);
  if (!kx_body || !(*kx_body)[0].is(Term::Kind::KeyValue)) {
    abort_at(ch, sn, "tls", Errc::FinishedMismatch, "unreadable key exchange");
  }
  if ((*kx_body)[1] != Term::plain(seen_cr) || (*kx_body)[2] != Term::plain(hex32(sr))) {
    abort_at(ch, sn, "tls", Errc::FinishedMismatch, "randoms differ from the hellos");
  }
  const Key server_k = (*kx_body)[0].carried_key();

  // Finished, each side over what it has seen so far
  const Term s_expect = ts.hash();
  const auto cfin = send(cn, sn, "finished", seal(k, tc.hash()));
  if (try_open(server_k, cfin) != std::optional<Term>(s_expect)) {
    abort_at(ch, sn, "tls", Errc::FinishedMismatch, "client finished does not match");
  }
  out.finished_ok.first = true;
  const Term c_expect = tc.hash();
  const auto sfin = send(sn, cn, "finished", seal(server_k, ts.hash()));
  if (try_open(k, sfin) != std::optional<Term>(c_expect)) {
    abort_at(ch, cn, "tls", Errc::FinishedMismatch, "server finished does not match");
  }
  out.finished_ok.second = true;
  if (std::find(client.suites.begin(), client.suites.end(), out.cipher_suite) == client.suites.end()) {
    abort_at(ch, cn, "tls", Errc::NoCommonSuite, "server chose unoffered " + out.cipher_suite);
  }
  out.session_key = k;
  ch.note(cn, "tls established " + version_name(out.version) + " " + out.cipher_suite);
  return out;
}

// ---------------------------------------------------------------------------
// Kerberos

Term KrbTicket::to_term() const {
  return Term::tuple({Term::plain(username), Term::plain(client_addr.to_string()),
                      Term::plain("valid=" + std::to_string(start) + "-" + std::to_string(end)),
                      Term::key_value(embedded_key)});
}

KrbTicket KrbTicket::from_term(const Term& body, const std::string& sealed_for) {
  auto parts = try_untuple(body, 4);
  if (!parts || !is_plain((*parts)[0]) || !is_plain((*parts)[1]) || !is_plain((*parts)[2]) ||
      !(*parts)[3].is(Term::Kind::KeyValue)) {
    throw Error(Errc::IdentityMismatch, "malformed ticket");
  }
  KrbTicket t;
  t.username = (*parts)[0].bytes();
  t.sealed_for = sealed_for;
  t.embedded_key = (*parts)[3].carried_key();
  try {
    t.client_addr = IpAddr::parse((*parts)[1].bytes());
  } catch (const Error&) {
    throw Error(Errc::IdentityMismatch, "malformed ticket address");
  }
  const auto& valid = (*parts)[2].bytes();
  auto dash = valid.find('-');
  auto a = number(valid.substr(6, dash == std::string::npos ? 0 : dash - 6));
  auto b = dash == std::string::npos ? std::nullopt : number(valid.substr(dash + 1));
  if (valid.rfind("valid=", 0) != 0 || !a || !b) throw Error(Errc::IdentityMismatch, "malformed ticket validity");
  t.start = *a;
  t.end = *b;
  return t;
}

Term authenticator(const std::string& user, IpAddr addr, std::uint64_t ts) {
  return Term::tuple({Term::plain(user), Term::plain(addr.to_string()), ts_term(ts)});
}

void Kdc::add_user(const std::string& user, const std::string& password) {
  users[user] = symcrypto::password_key(user, password);
}

namespace {

struct Auth {
  std::string user;
  std::string addr;
  std::uint64_t ts = 0;
};

std::optional<Auth> read_authenticator(const std::optional<Term>& body) {
  auto parts = try_untuple(body, 3);
  if (!parts || !is_plain((*parts)[0]) || !is_plain((*parts)[1])) return std::nullopt;
  auto ts = ts_of((*parts)[2]);
  if (!ts) return std::nullopt;
  return Auth{(*parts)[0].bytes(), (*parts)[1].bytes(), *ts};
}

// shared by TGS and SS: open the ticket and authenticator and check them
KrbTicket admit(const std::string& who, const Key& secret, const ClockPolicy& clock, const Term& ticket,
                const Term& auth, std::uint64_t now, Auth* out) {
  auto body = try_open(secret, ticket);
  if (!body) throw Error(Errc::IdentityMismatch, who + " cannot open the ticket");
  auto t = KrbTicket::from_term(*body, who);
  if (now > t.end || now < t.start) {
    throw Error(Errc::TicketExpired, "ticket for " + t.username + " valid " + std::to_string(t.start) + "-" +
                                         std::to_string(t.end) + ", now " + std::to_string(now));
  }
  auto a = read_authenticator(try_open(t.embedded_key, auth));
  if (!a) throw Error(Errc::IdentityMismatch, "authenticator does not open under the ticket key");
  if (!clock.fresh(a->ts, now)) {
    throw Error(Errc::ClockSkew, "authenticator ts=" + std::to_string(a->ts) + " at " + std::to_string(now));
  }
  if (a->user != t.username || a->addr != t.client_addr.to_string()) {
    throw Error(Errc::IdentityMismatch, "authenticator " + a->user + "@" + a->addr + " vs ticket " + t.username + "@" +
                                            t.client_addr.to_string());
  }
  *out = *a;
  return t;
}

}  // namespace

void krb_as_exchange(KrbClient& c, Kdc& kdc, Channel& ch) {
  const auto req = ch.deliver(c.node, kdc.as_name, "krb-as-req",
                              Term::pair(Term::plain(c.username), Term::plain(c.addr.to_string())));
  if (!req || !req->is(Term::Kind::Pair) || !is_plain(req->left()) || !is_plain(req->right())) {
    abort_at(ch, kdc.as_name, "krb", Errc::UnknownPrincipal, "malformed request");
  }
  const std::string user = req->left().bytes();
  auto u = kdc.users.find(user);
  if (u == kdc.users.end()) abort_at(ch, kdc.as_name, "krb", Errc::UnknownPrincipal, user);
  IpAddr addr;
  try {
    addr = IpAddr::parse(req->right().bytes());
  } catch (const Error&) {
    abort_at(ch, kdc.as_name, "krb", Errc::UnknownPrincipal, "bad address");
  }
  const auto now = ch.now();
  const Key ctgs = kdc.keys.keygen_symmetric("krb-" + user + "-tgs");
  const KrbTicket tgt{user, addr, now, now + kdc.validity, ctgs, kdc.tgs_name};
  const auto a = ch.deliver(kdc.as_name, c.node, "krb-msg-A", seal(u->second, Term::key_value(ctgs)));
  const auto b = ch.deliver(kdc.as_name, c.node, "krb-msg-B", seal(kdc.tgs_secret, tgt.to_term()));

  const Key user_key = symcrypto::password_key(c.username, c.password);
  ++c.password_uses;
  ch.note(c.node, "pwkey-derive user=" + c.username);
  if (!a || !b) abort_at(ch, c.node, "krb", Errc::UnknownPrincipal, "reply lost");
  Term inner;
  try {
    inner = open(user_key, *a);
  } catch (const Error& e) {
    ch.note(c.node, "krb abort " + std::string(to_string(e.code())) + " message A unreadable");
    throw;
  }
  if (!inner.is(Term::Kind::KeyValue)) abort_at(ch, c.node, "krb", Errc::IdentityMismatch, "message A malformed");
  c.tgs_session_key = inner.carried_key();
  c.tgt = *b;
}

std::pair<Term, Term> tgs_respond(Kdc& kdc, const Term& msg_c, const Term& msg_d, std::uint64_t now) {
  if (!msg_c.is(Term::Kind::Pair) || !is_plain(msg_c.right()) || msg_c.right().bytes().rfind("service=", 0) != 0) {
    throw Error(Errc::IdentityMismatch, "malformed message C");
  }
  const std::string service = msg_c.right().bytes().substr(8);
  Auth a;
  const auto tgt = admit(kdc.tgs_name, kdc.tgs_secret, kdc.clock, msg_c.left(), msg_d, now, &a);
  auto svc = kdc.services.find(service);
  if (svc == kdc.services.end()) throw Error(Errc::UnknownPrincipal, service);
  const Key cs = kdc.keys.keygen_symmetric("krb-" + tgt.username + "-" + service);
  const KrbTicket ticket{tgt.username, tgt.client_addr, now, now + kdc.validity, cs, service};
  Term e = seal(svc->second, ticket.to_term());
  Term f = seal(tgt.embedded_key, Term::pair(Term::key_value(cs), ts_term(a.ts + 1)));
  return {e, f};
}

ServiceGrant krb_tgs_exchange(KrbClient& c, Kdc& kdc, const std::string& service, Channel& ch) {
  if (!c.tgt || !c.tgs_session_key) throw Error(Errc::InvalidArgument, c.username + " has no TGT");
  const auto ts = ch.now();
  const auto got_c = ch.deliver(c.node, kdc.tgs_name, "krb-msg-C", Term::pair(*c.tgt, Term::plain("service=" + service)));
  const auto got_d = ch.deliver(c.node, kdc.tgs_name, "krb-msg-D",
                                seal(*c.tgs_session_key, authenticator(c.username, c.addr, ts)));
  if (!got_c || !got_d) abort_at(ch, kdc.tgs_name, "krb", Errc::IdentityMismatch, "request lost");
  std::pair<Term, Term> ef;
  try {
    ef = tgs_respond(kdc, *got_c, *got_d, ch.now());
  } catch (const Error& e) {
    ch.note(kdc.tgs_name, "krb abort " + std::string(to_string(e.code())) + " " + e.what());
    throw;
  }
  ch.note(kdc.tgs_name, "krb tgs issued " + service + " to " + c.username);
  const auto got_e = ch.deliver(kdc.tgs_name, c.node, "krb-msg-E", ef.first);
  const auto got_f = ch.deliver(kdc.tgs_name, c.node, "krb-msg-F", ef.second);
  auto f = try_open(*c.tgs_session_key, got_f);
  if (!got_e || !f || !f->is(Term::Kind::Pair) || !f->left().is(Term::Kind::KeyValue)) {
    abort_at(ch, c.node, "krb", Errc::BadTimestampEcho, "message F unreadable");
  }
  if (ts_of(f->right()) != std::optional<std::uint64_t>(ts + 1)) {
    abort_at(ch, c.node, "krb", Errc::BadTimestampEcho, "TGS echoed " + f->right().render() + ", sent ts=" + std::to_string(ts));
  }
  ServiceGrant g{f->left().carried_key(), *got_e};
  c.grants[service] = g;
  return g;
}

Term ss_respond(ServiceServer& ss, const Term& msg_e, const Term& msg_g, std::uint64_t now) {
  Auth a;
  const auto t = admit(ss.name, ss.secret, ss.clock, msg_e, msg_g, now, &a);
  return seal(t.embedded_key, ts_term(a.ts + 1));
}

void krb_ss_exchange(KrbClient& c, ServiceServer& ss, Channel& ch) {
  auto g = c.grants.find(ss.name);
  if (g == c.grants.end()) throw Error(Errc::InvalidArgument, c.username + " holds no ticket for " + ss.name);
  const auto ts = ch.now();
  const auto got_e = ch.deliver(c.node, ss.name, "krb-msg-E", g->second.ticket);
  const auto got_g = ch.deliver(c.node, ss.name, "krb-msg-G",
                                seal(g->second.session_key, authenticator(c.username, c.addr, ts)));
  if (!got_e || !got_g) abort_at(ch, ss.name, "krb", Errc::IdentityMismatch, "request lost");
  Term h;
  try {
    h = ss_respond(ss, *got_e, *got_g, ch.now());
  } catch (const Error& e) {
    ch.note(ss.name, "krb abort " + std::string(to_string(e.code())) + " " + e.what());
    throw;
  }
  const auto got_h = ch.deliver(ss.name, c.node, "krb-msg-H", h);
  auto echo = try_open(g->second.session_key, got_h);
  if (!echo || ts_of(*echo) != std::optional<std::uint64_t>(ts + 1)) {
    abort_at(ch, c.node, "krb", Errc::BadTimestampEcho, "service did not echo ts+1");
  }
  ch.note(c.node, "krb mutual-ok " + ss.name);
}

}  // namespace netsec::handshakes

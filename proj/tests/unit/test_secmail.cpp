#include <random>

#include "doctest.h"
#include "netsec/error.hpp"
#include "netsec/secmail.hpp"

using namespace netsec;
using namespace netsec::secmail;
using simnet::Layer;

namespace {

template <typename F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::InvalidArgument;
}

struct Mailers {
  KeyFactory keys{17};
  MailParty s, r, m;
  TrustStore store;

  Mailers() {
    s = {"S", keys.keygen_pair("S"), {}};
    s.cert = symcrypto::cert_issue("Mail-CA", "S", s.keys.pub);
    r = {"R", keys.keygen_pair("R"), {}};
    r.cert = symcrypto::cert_issue("Mail-CA", "R", r.keys.pub);
    m = {"M", keys.keygen_pair("M"), {}};
    m.cert = symcrypto::cert_issue("Dodgy-CA", "M", m.keys.pub);
    store.trusted_issuers = {"Mail-CA"};
  }
};

std::string random_text(std::mt19937& rng, std::size_t max_len) {
  const std::size_t n = rng() % (max_len + 1);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<char>(' ' + rng() % 95);
  return s;
}

// brute force: count unordered pairs
std::uint64_t pairs(std::uint64_t n) {
  std::uint64_t c = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint64_t j = i + 1; j < n; ++j) ++c;
  }
  return c;
}

}  // namespace

TEST_CASE("pgp envelope structure") {
  Mailers w;
  auto env = pgp_seal(w.s, w.r.keys.pub, "To: R", "hello");
  REQUIRE(env.components.size() == 2);
  CHECK(env.outer_header == "To: R");
  CHECK(env.components[0].header_key() == w.r.keys.pub);
  CHECK(env.components[1].header_key() == w.r.keys.pub);
  const auto inner = symcrypto::open(w.r.keys.prv, env.components[1]);
  CHECK(inner.header_key() == w.s.keys.prv);
  const auto msg = symcrypto::open(w.s.keys.pub, inner);
  CHECK(msg.left() == Term::plain("To: R"));

  auto opened = pgp_open(w.r.keys.prv, w.store, env);
  CHECK(opened.header == "To: R");
  CHECK(opened.body == "hello");
  CHECK(opened.sender == "S");
  CHECK(opened.non_repudiation_ok);

  auto empty = pgp_seal(w.s, w.r.keys.pub, "To: R", "");
  CHECK(symcrypto::open(w.s.keys.pub, symcrypto::open(w.r.keys.prv, empty.components[1])).right() == Term::plain(""));
  CHECK(pgp_open(w.r.keys.prv, w.store, empty).body.empty());
}

TEST_CASE("pgp failures") {
  Mailers w;
  // impostor signs with its own key but attaches S's certificate
  MailParty impostor{"S", w.m.keys, w.s.cert};
  auto forged = pgp_seal(impostor, w.r.keys.pub, "To: R", "pay M");
  auto opened = pgp_open(w.r.keys.prv, w.store, forged);
  CHECK_FALSE(opened.non_repudiation_ok);
  CHECK(opened.body.empty());

  auto env = pgp_seal(w.s, w.r.keys.pub, "To: R", "hello");
  auto edited = env;
  edited.outer_header = "To: M";
  CHECK(code_of([&] { pgp_open(w.r.keys.prv, w.store, edited); }) == Errc::HeaderMismatch);
  CHECK(code_of([&] { pgp_open(w.m.keys.prv, w.store, env); }) == Errc::KeyMismatch);
  auto untrusted = pgp_seal(w.m, w.r.keys.pub, "To: R", "hi");
  CHECK(code_of([&] { pgp_open(w.r.keys.prv, w.store, untrusted); }) == Errc::CertRejected);
}

TEST_CASE("smime envelope structure") {
  Mailers w;
  auto a = smime_seal(w.s, w.r.keys.pub, "To: R", "hello", w.keys);
  auto b = smime_seal(w.s, w.r.keys.pub, "To: R", "hello", w.keys);
  REQUIRE(a.components.size() == 4);
  const auto ka = symcrypto::open(w.r.keys.prv, a.components[1]).carried_key();
  const auto kb = symcrypto::open(w.r.keys.prv, b.components[1]).carried_key();
  CHECK(ka != kb);
  const Term msg = Term::pair(Term::plain("To: R"), Term::plain("hello"));
  CHECK(symcrypto::open(w.s.keys.pub, a.components[2]) == symcrypto::digest(msg));
  CHECK(symcrypto::open(w.r.keys.prv, a.components[3]) == w.s.cert);
  CHECK(a.render().find("4: ") != std::string::npos);

  auto opened = smime_open(w.r.keys.prv, w.store, a);
  CHECK(opened.body == "hello");
  CHECK(opened.integrity_ok);
  CHECK(opened.sender_ok);
}

TEST_CASE("smime tamper cases") {
  Mailers w;
  auto env = smime_seal(w.s, w.r.keys.pub, "To: R", "hello", w.keys);
  const auto k = symcrypto::open(w.r.keys.prv, env.components[1]).carried_key();

  auto flipped = env;
  flipped.components[0] = symcrypto::seal(k, Term::pair(Term::plain("To: R"), Term::plain("hellp")));
  auto f = smime_open(w.r.keys.prv, w.store, flipped);
  CHECK_FALSE(f.integrity_ok);

  auto swapped = env;
  swapped.components[3] = symcrypto::seal(w.r.keys.pub, w.m.cert);
  CHECK_FALSE(smime_open(w.r.keys.prv, w.store, swapped).sender_ok);

  // each single component altered by an adversary without keys
  const auto adversary = w.keys.keygen_symmetric("adversary");
  for (std::size_t i = 0; i < 4; ++i) {
    CAPTURE(i);
    auto t = env;
    t.components[i] = symcrypto::tamper(t.components[i], adversary);
    REQUIRE(t.components[i] != env.components[i]);
    try {
      auto o = smime_open(w.r.keys.prv, w.store, t);
      CHECK((!o.integrity_ok || !o.sender_ok));
    } catch (const Error& e) {
      CHECK(e.code() == Errc::KeyMismatch);
    }
  }
}

TEST_CASE("envelope round trips") {
  Mailers w;
  std::mt19937 rng(23);
  for (int i = 0; i < 200; ++i) {
    const auto header = random_text(rng, 30);
    const auto body = random_text(rng, 200);
    auto p = pgp_seal(w.s, w.r.keys.pub, header, body);
    auto po = pgp_open(w.r.keys.prv, w.store, MailEnvelope::from_term(p.to_term()));
    CHECK(po.header == header);
    CHECK(po.body == body);
    auto s = smime_seal(w.s, w.r.keys.pub, header, body, w.keys);
    auto so = smime_open(w.r.keys.prv, w.store, MailEnvelope::from_term(s.to_term()));
    CHECK(so.header == header);
    CHECK(so.body == body);
    CHECK((so.integrity_ok && so.sender_ok));
  }
  CHECK_THROWS_AS(MailEnvelope::from_term(Term::plain("x")), Error);
}

TEST_CASE("key counts") {
  CHECK(key_count(KeyMode::Link, 10) == 45);
  CHECK(key_count(KeyMode::E2eSymmetric, 10) == 45);
  CHECK(key_count(KeyMode::E2ePublic, 10) == 20);
  CHECK(key_count(KeyMode::E2ePublic, 4) == 8);
  CHECK(key_count(KeyMode::Link, 1) == 0);
  CHECK(key_count(KeyMode::E2eSymmetric, 1) == 0);
  CHECK(key_count(KeyMode::E2ePublic, 1) == 2);
  for (std::uint64_t n = 1; n <= 50; ++n) {
    CHECK(key_count(KeyMode::Link, n) == pairs(n));
    CHECK(key_count(KeyMode::E2eSymmetric, n) == pairs(n));
    // one key pair per user
    std::uint64_t halves = 0;
    for (std::uint64_t u = 0; u < n; ++u) halves += 2;
    CHECK(key_count(KeyMode::E2ePublic, n) == halves);
  }
  CHECK_THROWS_AS(key_count(KeyMode::Link, 0), Error);
  CHECK(key_mode_from("e2e_public") == KeyMode::E2ePublic);
}

TEST_CASE("analytic exposure") {
  const std::vector<std::string> path{"A", "R1", "R2", "B"};
  auto link = exposure_report(path, ProtectionMode::Link);
  for (const char* r : {"R1", "R2"}) {
    CHECK(link.plaintext_at(r, Layer::Internet));
    CHECK(link.plaintext_at(r, Layer::Link));
  }
  auto e2e = exposure_report(path, ProtectionMode::EndToEnd);
  int plain = 0;
  for (const auto& e : e2e.exposure) plain += e.plaintext;
  CHECK(plain == 2);
  CHECK(e2e.plaintext_at("A", Layer::Application));
  CHECK(e2e.plaintext_at("B", Layer::Application));

  for (auto mode : {ProtectionMode::Link, ProtectionMode::EndToEnd}) {
    auto two = exposure_report({"A", "B"}, mode);
    CHECK(two.plaintext_at("A", Layer::Application));
    CHECK(two.plaintext_at("B", Layer::Application));
  }
  CHECK(code_of([] { exposure_report({"A"}, ProtectionMode::Link); }) == Errc::PathTooShort);
}

TEST_CASE("simulated exposure agrees with the analysis") {
  for (const auto& path : std::vector<std::vector<std::string>>{{"A", "B"}, {"A", "R1", "B"}, {"A", "R1", "R2", "B"},
                                                                {"A", "R1", "R2", "R3", "R4", "B"}}) {
    for (auto mode : {ProtectionMode::Link, ProtectionMode::EndToEnd}) {
      CAPTURE(path.size());
      CAPTURE(to_string(mode));
      auto sim = simulate_exposure(path, mode, "Subject: q3", "the merger is off");
      CHECK(sim.delivered);
      CHECK(sim.report.exposure == exposure_report(path, mode).exposure);
      CHECK(sim.wire_sends == static_cast<int>(path.size()) - 1);
      CHECK(sim.wire_plaintext_sends == 0);
    }
  }
  CHECK(code_of([] { simulate_exposure({"A"}, ProtectionMode::Link, "h", "b"); }) == Errc::PathTooShort);
}

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace netsec {

enum class Errc {
  // fabric / topology
  DuplicateName,
  DanglingLink,
  LinkNotTappable,
  UnknownNode,
  NotNeighbor,
  // stack
  ServiceDisabled,
  NoListener,
  NotEstablished,
  NameNotFound,
  // symbolic crypto
  KeyMismatch,
  NotSealed,
  NotACert,
  // attacks
  NotSameDomain,
  NoTap,
  NotOnPath,
  UnknownDomain,
  NotARouter,
  ZombieNotCompromised,
  // firewall
  PolicyViolation,
  // ipsec / vpn
  NoPublicAddress,
  NotTunneled,
  CertRejected,
  NoIkeSa,
  EmptyProposal,
  SpiExhausted,
  SaExpired,
  UnknownSpi,
  BadMac,
  ReplayedSeq,
  TruncatedHeader,
  NonzeroReserved,
  LengthMismatch,
  // handshakes
  HostKeyRejected,
  ChallengeFailed,
  NoCommonAlgorithm,
  BadCredentials,
  VersionMismatch,
  NoCommonSuite,
  FinishedMismatch,
  UnknownPrincipal,
  TicketExpired,
  ClockSkew,
  IdentityMismatch,
  BadTimestampEcho,
  // secure mail
  HeaderMismatch,
  PathTooShort,
  // scenario files
  SyntaxError,
  UnknownAction,
  UnknownNodeRef,
  IoFailure,
  InvalidArgument,
};

std::string_view to_string(Errc code);

/// Every operation in the library reports failure by throwing this type.
/// The code is the stable, testable part; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);
  explicit Error(Errc code);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace netsec

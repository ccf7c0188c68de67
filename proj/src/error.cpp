#include "netsec/error.hpp"

namespace netsec {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::DuplicateName: return "DuplicateName";
    case Errc::DanglingLink: return "DanglingLink";
    case Errc::LinkNotTappable: return "LinkNotTappable";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::NotNeighbor: return "NotNeighbor";
    case Errc::ServiceDisabled: return "ServiceDisabled";
    case Errc::NoListener: return "NoListener";
    case Errc::NotEstablished: return "NotEstablished";
    case Errc::NameNotFound: return "NameNotFound";
    case Errc::KeyMismatch: return "KeyMismatch";
    case Errc::NotSealed: return "NotSealed";
    case Errc::NotACert: return "NotACert";
    case Errc::NotSameDomain: return "NotSameDomain";
    case Errc::NoTap: return "NoTap";
    case Errc::NotOnPath: return "NotOnPath";
    case Errc::UnknownDomain: return "UnknownDomain";
    case Errc::NotARouter: return "NotARouter";
    case Errc::ZombieNotCompromised: return "ZombieNotCompromised";
    case Errc::PolicyViolation: return "PolicyViolation";
    case Errc::NoPublicAddress: return "NoPublicAddress";
    case Errc::NotTunneled: return "NotTunneled";
    case Errc::CertRejected: return "CertRejected";
    case Errc::NoIkeSa: return "NoIkeSa";
    case Errc::EmptyProposal: return "EmptyProposal";
    case Errc::SpiExhausted: return "SpiExhausted";
    case Errc::SaExpired: return "SaExpired";
    case Errc::UnknownSpi: return "UnknownSpi";
    case Errc::BadMac: return "BadMac";
    case Errc::ReplayedSeq: return "ReplayedSeq";
    case Errc::TruncatedHeader: return "TruncatedHeader";
    case Errc::NonzeroReserved: return "NonzeroReserved";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::HostKeyRejected: return "HostKeyRejected";
    case Errc::ChallengeFailed: return "ChallengeFailed";
    case Errc::NoCommonAlgorithm: return "NoCommonAlgorithm";
    case Errc::BadCredentials: return "BadCredentials";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::NoCommonSuite: return "NoCommonSuite";
    case Errc::FinishedMismatch: return "FinishedMismatch";
    case Errc::UnknownPrincipal: return "UnknownPrincipal";
    case Errc::TicketExpired: return "TicketExpired";
    case Errc::ClockSkew: return "ClockSkew";
    case Errc::IdentityMismatch: return "IdentityMismatch";
    case Errc::BadTimestampEcho: return "BadTimestampEcho";
    case Errc::HeaderMismatch: return "HeaderMismatch";
    case Errc::PathTooShort: return "PathTooShort";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::UnknownAction: return "UnknownAction";
    case Errc::UnknownNodeRef: return "UnknownNodeRef";
    case Errc::IoFailure: return "IoFailure";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

Error::Error(Errc code) : std::runtime_error(std::string(to_string(code))), code_(code) {}

}  // namespace netsec

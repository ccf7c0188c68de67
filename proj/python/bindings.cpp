#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "netsec/attacks.hpp"
#include "netsec/error.hpp"
#include "netsec/handshakes.hpp"
#include "netsec/ipsec.hpp"
#include "netsec/scenario.hpp"
#include "netsec/secmail.hpp"
#include "netsec/stack.hpp"

namespace py = pybind11;
using namespace netsec;

namespace {

secmail::ProtectionMode protection(const std::string& name) {
  if (name == "link") return secmail::ProtectionMode::Link;
  if (name == "e2e") return secmail::ProtectionMode::EndToEnd;
  throw Error(Errc::InvalidArgument, "mode must be link or e2e, got " + name);
}

std::vector<std::string> trace_lines(const simnet::Trace& t) {
  std::vector<std::string> out;
  out.reserve(t.size());
  for (const auto& e : t) out.push_back(e.line());
  return out;
}

py::dict report_dict(const attacks::AttackReport& r) {
  py::dict d;
  d["name"] = r.name;
  d["success"] = r.success;
  d["metrics"] = r.metrics;
  d["notes"] = r.notes;
  return d;
}

}  // namespace

PYBIND11_MODULE(netsec, m) {
  m.doc() = "Deterministic network-security simulator";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::handle(error.ptr())(e.what());
      inst.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error.ptr(), inst.ptr());
    }
  });

  // scenarios
  py::class_<scenario::Scenario>(m, "Scenario")
      .def_readonly("name", &scenario::Scenario::name)
      .def_readwrite("seed", &scenario::Scenario::seed)
      .def_readwrite("max_events", &scenario::Scenario::max_events)
      .def_property_readonly("labels",
                             [](const scenario::Scenario& s) {
                               std::vector<std::string> out;
                               for (const auto& st : s.script) out.push_back(st.label);
                               return out;
                             })
      .def_property_readonly("assertions", [](const scenario::Scenario& s) {
        std::vector<std::string> out;
        for (const auto& a : s.assertions) out.push_back(a.text());
        return out;
      });

  py::class_<scenario::RunResult>(m, "RunResult")
      .def_readonly("exit_status", &scenario::RunResult::exit_status)
      .def_readonly("metrics", &scenario::RunResult::metrics)
      .def_readonly("reports", &scenario::RunResult::reports)
      .def_property_readonly("passed", &scenario::RunResult::passed)
      .def_property_readonly("trace", [](const scenario::RunResult& r) { return trace_lines(r.trace); })
      .def_property_readonly("assertions", [](const scenario::RunResult& r) {
        std::vector<std::tuple<std::string, bool, std::string>> out;
        for (const auto& a : r.assertions) out.emplace_back(a.assertion.text(), a.passed, a.actual);
        return out;
      });

  m.def("parse_scenario", &scenario::parse_scenario, py::arg("text"));
  m.def("load_scenario", &scenario::load_scenario, py::arg("path"));
  m.def("run_scenario", &scenario::run_scenario, py::arg("scenario"));
  m.def(
      "run", [](const std::string& text) { return scenario::run_scenario(scenario::parse_scenario(text)); },
      py::arg("text"), "Parse and run scenario text.");
  m.def("action_names", &scenario::action_names);

  // closed-form pieces
  m.def(
      "key_count",
      [](const std::string& mode, std::uint64_t n) { return secmail::key_count(secmail::key_mode_from(mode), n); },
      py::arg("mode"), py::arg("n"));
  m.def(
      "exposure_report",
      [](const std::vector<std::string>& path, const std::string& mode) {
        return secmail::exposure_report(path, protection(mode)).render();
      },
      py::arg("path"), py::arg("mode"));
  m.def(
      "simulate_exposure",
      [](const std::vector<std::string>& path, const std::string& mode, const std::string& header,
         const std::string& body) {
        auto s = secmail::simulate_exposure(path, protection(mode), header, body);
        py::dict d;
        d["report"] = s.report.render();
        d["wire_sends"] = s.wire_sends;
        d["wire_plaintext_sends"] = s.wire_plaintext_sends;
        d["delivered"] = s.delivered;
        d["trace"] = trace_lines(s.trace);
        return d;
      },
      py::arg("path"), py::arg("mode"), py::arg("header") = "Subject: hi", py::arg("body") = "hello");
  m.def(
      "choose_algorithm",
      [](const std::vector<std::pair<std::string, int>>& offered, const std::set<std::string>& supported) {
        std::vector<handshakes::RankedAlg> algs;
        for (const auto& [name, rank] : offered) algs.push_back({name, rank});
        return handshakes::choose_algorithm(algs, supported);
      },
      py::arg("offered"), py::arg("supported"));
  m.def("chargen_length", &stack::chargen_length, py::arg("counter"));
  m.def("esp_pad_length", &ipsec::esp_pad_length, py::arg("payload_len"), py::arg("block") = ipsec::kDefaultBlock);

  m.def(
      "encode_ah",
      [](std::uint8_t next_header, std::uint32_t spi, std::uint32_t sequence, const py::bytes& auth) {
        AhHeader h;
        h.next_header = next_header;
        h.spi = spi;
        h.sequence = sequence;
        h.auth_data = auth;
        h.payload_length = static_cast<std::uint8_t>(3 + h.auth_data.size() / 4);
        return py::bytes(ipsec::encode_ah(h));
      },
      py::arg("next_header"), py::arg("spi"), py::arg("sequence"), py::arg("auth_data"));
  m.def(
      "decode_ah",
      [](const py::bytes& raw) {
        const auto h = ipsec::decode_ah(std::string(raw));
        py::dict d;
        d["next_header"] = h.next_header;
        d["payload_length"] = h.payload_length;
        d["spi"] = h.spi;
        d["sequence"] = h.sequence;
        d["auth_data"] = py::bytes(h.auth_data);
        return d;
      },
      py::arg("data"));

  // stock attacks on their stock topologies
  m.def(
      "smurf",
      [](int hosts, bool directed_broadcast, bool broadcast_echo) {
        stack::Internetwork inet(attacks::topo::smurf(hosts));
        inet.policy("R").directed_broadcast = directed_broadcast;
        for (int i = 1; i <= hosts; ++i) inet.policy("H" + std::to_string(i)).broadcast_echo = broadcast_echo;
        return report_dict(attacks::smurf(inet, "M", inet.primary_ip("V"), "AMP"));
      },
      py::arg("hosts") = 5, py::arg("directed_broadcast") = true, py::arg("broadcast_echo") = true);
  m.def(
      "syn_flood",
      [](int count, std::size_t capacity) {
        stack::Internetwork inet(attacks::topo::flood(0));
        inet.host("S").synq.capacity = capacity;
        auto pool = attacks::unused_addresses(inet, 16);
        return report_dict(attacks::syn_flood(inet, "M", "S", 80, count, pool, "G"));
      },
      py::arg("count") = 8, py::arg("capacity") = 8);
}

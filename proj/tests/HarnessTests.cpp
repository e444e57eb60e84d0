// Copyright 2026 Neverland Simulator Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include <neverland/Harness.hpp>
#include <neverland/ScenarioIo.hpp>

using namespace neverland;

namespace
{
  const ScenarioReport* findReport(const std::vector<ScenarioReport>& reports,
                                   const std::string& name)
  {
    for (const auto& r : reports)
      if (r.scenario == name)
        return &r;
    return nullptr;
  }
}

TEST_CASE("the standard suite has eight scenarios")
{
  REQUIRE(standardSuite().size() == 8);
}

TEST_CASE("all standard scenarios pass on a clean build")
{
  auto reports = runStandardSuite();
  REQUIRE(reports.size() == 8);
  for (const auto& r : reports)
    {
      INFO(r.scenario);
      REQUIRE(r.pass);
    }

  // Reports come back sorted by name.
  for (size_t i = 1; i < reports.size(); ++i)
    REQUIRE(reports[i - 1].scenario < reports[i].scenario);
}

TEST_CASE("ret2usr reports a table fetch fault despite corrupted page bits")
{
  auto reports = runStandardSuite();
  const ScenarioReport* r = findReport(reports, "ret2usr-pte");
  REQUIRE(r != nullptr);
  REQUIRE(r->pass);
  REQUIRE(r->expectations[0].kind == "trap_is");
  REQUIRE(r->expectations[0].observed == "table_fault_fetch");
}

TEST_CASE("a hooked pointer reaches existing kernel code but not user pages")
{
  auto reports = runStandardSuite();
  const ScenarioReport* r = findReport(reports, "code-pointer-hook");
  REQUIRE(r != nullptr);
  REQUIRE(r->pass);
  REQUIRE(r->expectations[1].kind == "runs_to_halt");
  REQUIRE(r->expectations[1].observed == "halted");
  REQUIRE(r->expectations[2].observed == "table_fault_fetch");
}

TEST_CASE("disabling one protection layer fails at least one scenario")
{
  RunOptions arm;
  arm.disableArm = true;
  int armFails = 0;
  for (const auto& r : runStandardSuite(arm))
    armFails += r.pass ? 0 : 1;
  REQUIRE(armFails >= 1);

  RunOptions stvec;
  stvec.unlockStvec = true;
  auto stvecReports = runStandardSuite(stvec);
  REQUIRE(not findReport(stvecReports, "config-register-hook")->pass);

  RunOptions seal;
  seal.unsealSpares = true;
  auto sealReports = runStandardSuite(seal);
  REQUIRE(not findReport(sealReports, "malicious-driver-load")->pass);
}

TEST_CASE("reports serialize losslessly")
{
  for (const auto& r : runStandardSuite())
    {
      Json j = toJson(r);
      ScenarioReport back = reportFromJson(Json::parse(j.dump()));
      REQUIRE(back == r);
    }
}

TEST_CASE("boot lockdown scenario: user ecall round-trips through locked paths")
{
  Scenario s;
  s.name = "boot-lockdown";
  s.runAfterSteps = true;
  s.expectations = {
    Expectation::runsToHalt(),
    Expectation::trapIs(TrapCause::Syscall),
    Expectation::tableUnchanged(),
  };

  ScenarioRunner runner(s);
  ScenarioReport report = runner.runAll();
  REQUIRE(report.pass);
  REQUIRE(runner.machine().reg(1) == 42);
  REQUIRE(runner.bootStats().entriesUsed <= 8);
}

TEST_CASE("custom user programs and labels resolve as addresses")
{
  Scenario s;
  s.name = "custom-user";
  s.userProgram = R"(
  entry:
    li r1, 1            # second syscall slot: nop handler
    ecall
    li r2, 5
  spot:
    halt
  )";
  s.runAfterSteps = true;
  s.expectations = {Expectation::runsToHalt()};

  ScenarioRunner runner(s);
  ScenarioReport report = runner.runAll();
  REQUIRE(report.pass);
  REQUIRE(runner.machine().reg(2) == 5);
  REQUIRE(runner.layout().vaSymbols.count("spot") == 1);
  REQUIRE(runner.layout().vaSymbols.at("spot") == kUserVbase + 12);
}

TEST_CASE("custom kernel program: dispatcher that halts on any trap")
{
  Scenario s;
  s.name = "custom-kernel";
  s.kernelProgram = R"(
  trap_entry:
    li r9, 0x77
    halt
  )";
  s.runAfterSteps = true;
  s.expectations = {
    Expectation::runsToHalt(),
    Expectation::trapIs(TrapCause::Syscall),
  };

  ScenarioRunner runner(s);
  ScenarioReport report = runner.runAll();
  REQUIRE(report.pass);
  REQUIRE(runner.machine().reg(9) == 0x77);
}

TEST_CASE("address expressions parse, print and resolve")
{
  REQUIRE(AddrExpr::parse("0x1234").offset == 0x1234);
  REQUIRE(AddrExpr::parse("4660").offset == 4660);

  AddrExpr e = AddrExpr::parse("pa:syscall_table+0x10");
  REQUIRE(e.space == AddrExpr::Space::Pa);
  REQUIRE(e.symbol == "syscall_table");
  REQUIRE(e.offset == 0x10);
  REQUIRE(e.toString() == "pa:syscall_table+0x10");

  REQUIRE_THROWS_AS(AddrExpr::parse("va:"), ScenarioError);
  REQUIRE_THROWS_AS(AddrExpr::parse("zz"), ScenarioError);

  BootLayout layout;
  layout.paSymbols["here"] = 0x1000;
  REQUIRE(AddrExpr::pa("here", 4).resolve(layout) == 0x1004);
  REQUIRE_THROWS_AS(AddrExpr::va("missing").resolve(layout), ScenarioError);
}

TEST_CASE("scenarios without expectations are invalid")
{
  Scenario s;
  s.name = "empty";
  REQUIRE_THROWS_AS(runScenario(s), ScenarioError);
}

TEST_CASE("unresolvable symbols surface as scenario errors")
{
  Scenario s;
  s.name = "bad-symbol";
  s.steps = {ExploitStep::physWrite(AddrExpr::pa("not_a_region"), {1, 2, 3, 4})};
  s.expectations = {Expectation::tableUnchanged()};
  REQUIRE_THROWS_AS(runScenario(s), ScenarioError);
}

TEST_CASE("scenario files parse and run")
{
  const char* doc = R"json({
    "name": "file-syscall-hook",
    "exploit_steps": [
      {"op": "phys_write", "addr": "pa:syscall_table", "value": "va:user_entry"}
    ],
    "expect": [
      {"kind": "verdict_is", "verdict": "deny", "cause": "write_protected", "step": 0},
      {"kind": "mem_equals", "addr": "pa:syscall_table", "expect": "original",
       "length": 16},
      {"kind": "table_unchanged"}
    ]
  })json";

  Scenario s = parseScenarioText(doc);
  REQUIRE(s.name == "file-syscall-hook");
  REQUIRE(s.steps.size() == 1);
  REQUIRE(s.expectations.size() == 3);

  ScenarioReport report = runScenario(s);
  REQUIRE(report.pass);
}

TEST_CASE("scenario schema rejects unknown keys and malformed steps")
{
  REQUIRE_THROWS_AS(parseScenarioText(R"({"name":"x","bogus":1,
    "expect":[{"kind":"table_unchanged"}]})"), ScenarioError);

  REQUIRE_THROWS_AS(parseScenarioText(R"({"name":"x",
    "exploit_steps":[{"op":"frobnicate"}],
    "expect":[{"kind":"table_unchanged"}]})"), ScenarioError);

  REQUIRE_THROWS_AS(parseScenarioText(R"({"name":"x","expect":[]})"), ScenarioError);

  REQUIRE_THROWS_AS(parseScenarioText("not json at all"), ScenarioError);

  REQUIRE_THROWS_AS(parseScenarioText(R"({"name":"x",
    "expect":[{"kind":"trap_is","cause":"no_such_cause"}]})"), ScenarioError);
}

TEST_CASE("scenario json covers every step and boot knob")
{
  const char* doc = R"json({
    "name": "kitchen-sink",
    "boot": {"preset": "standard", "pool_bytes": "0x10000", "jit_bytes": 4096,
             "defrag": true, "arm": true, "lock_stvec": true, "seal_unused": true},
    "modules": [
      {"name": "alpha", "text": {"pages": 2, "seed": 9}, "data": "aabb"}
    ],
    "exploit_steps": [
      {"op": "csr_write", "csr": "sum", "value": "0x1"},
      {"op": "mmio_write", "offset": "0x1000", "value": "0x0"},
      {"op": "pte_corrupt", "va": "0x600000", "pa": "pa:free_frame",
       "writable": true, "executable": true, "user": false},
      {"op": "jump_supervisor", "target": "0x600000"}
    ],
    "expect": [
      {"kind": "table_unchanged"},
      {"kind": "trap_is", "cause": "table_fault_fetch", "step": 3},
      {"kind": "csr_equals", "csr": "sum", "value": "0x1"}
    ],
    "run": false,
    "max_steps": 500
  })json";

  Scenario s = parseScenarioText(doc);
  REQUIRE(s.boot.jitBytes == 4096);
  REQUIRE(s.modules->size() == 1);
  REQUIRE(s.modules->front().text.size() == 2 * kPageSize);
  REQUIRE(s.maxSteps == 500);

  ScenarioReport report = runScenario(s);
  INFO(toJson(report).dump(2));
  REQUIRE(report.pass);
}

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

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include <neverland/ScenarioIo.hpp>

namespace
{

  constexpr int kExitPass = 0;
  constexpr int kExitMismatch = 1;
  constexpr int kExitUsage = 2;

  std::string readFile(const std::string& path)
  {
    std::ifstream in(path, std::ios::binary);
    if (not in)
      throw neverland::ScenarioError("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  }

  std::string dirOf(const std::string& path)
  {
    auto slash = path.find_last_of('/');
    return slash == std::string::npos ? std::string(".") : path.substr(0, slash);
  }

  /// NEVERLAND_TABLE_BASE moves the MMIO window (hex accepted).
  uint64_t tableBaseFromEnv()
  {
    const char* env = std::getenv("NEVERLAND_TABLE_BASE");
    if (not env or not *env)
      return 0;
    try
      {
        return std::stoull(env, nullptr, 0);
      }
    catch (const std::exception&)
      {
        throw neverland::ScenarioError(
          "NEVERLAND_TABLE_BASE is not a valid address");
      }
  }

  int emitReports(const std::vector<neverland::ScenarioReport>& reports,
                  const std::string& format, bool single)
  {
    bool allPass = true;
    for (const auto& r : reports)
      allPass = allPass and r.pass;

    if (format == "json")
      {
        if (single and reports.size() == 1)
          std::cout << neverland::toJson(reports.front()).dump(2) << "\n";
        else
          {
            neverland::Json arr = neverland::Json::array();
            for (const auto& r : reports)
              arr.push_back(neverland::toJson(r));
            std::cout << arr.dump(2) << "\n";
          }
      }
    else
      {
        for (const auto& r : reports)
          std::cout << neverland::reportText(r);
        if (not single)
          std::cout << (allPass ? "all scenarios pass" : "some scenarios FAILED")
                    << " (" << reports.size() << " run)\n";
      }
    return allPass ? kExitPass : kExitMismatch;
  }

  int cmdRun(const std::string& path, const std::string& format, unsigned tableSize)
  {
    neverland::Scenario scenario =
      neverland::parseScenarioText(readFile(path), dirOf(path));
    neverland::RunOptions opts;
    opts.tableCapacity = tableSize;
    opts.tableBase = tableBaseFromEnv();
    neverland::ScenarioReport report = neverland::runScenario(scenario, opts);
    return emitReports({report}, format, true);
  }

  int cmdSuite(const std::string& only, const std::string& format, unsigned tableSize)
  {
    neverland::RunOptions opts;
    opts.tableCapacity = tableSize;
    opts.tableBase = tableBaseFromEnv();

    std::vector<neverland::Scenario> scenarios = neverland::standardSuite();
    if (not only.empty())
      {
        std::erase_if(scenarios, [&only](const neverland::Scenario& s) {
          return s.name != only;
        });
        if (scenarios.empty())
          throw neverland::ScenarioError("no scenario named '" + only + "'");
      }

    std::vector<neverland::ScenarioReport> reports;
    for (const auto& s : scenarios)
      reports.push_back(neverland::runScenario(s, opts));
    std::sort(reports.begin(), reports.end(),
              [](const auto& a, const auto& b) { return a.scenario < b.scenario; });
    return emitReports(reports, format, false);
  }

  int cmdAsm(const std::string& path, uint64_t base)
  {
    neverland::Program prog;
    try
      {
        prog = neverland::assemble(readFile(path), base);
      }
    catch (const neverland::AsmError& e)
      {
        std::cerr << path << ":" << e.what() << "\n";
        return kExitUsage;
      }

    uint64_t addr = prog.base;
    for (uint32_t word : prog.words)
      {
        std::cout << std::hex << std::setw(8) << std::setfill('0') << addr << ": "
                  << std::setw(8) << word << "  " << std::dec
                  << neverland::disassemble(word) << "\n";
        addr += 4;
      }
    if (not prog.symbols.empty())
      {
        std::cout << "symbols:\n";
        for (const auto& [name, va] : prog.symbols)
          std::cout << "  " << name << " = 0x" << std::hex << va << std::dec << "\n";
      }
    return kExitPass;
  }

  int cmdBootDemo(unsigned tableSize)
  {
    neverland::MachineConfig mc;
    if (tableSize)
      mc.tableCapacity = tableSize;
    if (uint64_t base = tableBaseFromEnv())
      mc.tableBase = base;

    neverland::Machine machine(mc);
    neverland::StandardPreset preset = neverland::standardPreset();
    neverland::BootResult result =
      neverland::loadAndBoot(machine, preset.image, preset.modules, preset.config);

    neverland::RunResult run = machine.run(10'000);

    const neverland::BootStats& st = result.stats;
    std::cout << "boot: ok, locked down with " << st.entriesUsed << " of "
              << machine.table().capacity() << " entries\n"
              << "permission_writes: " << st.permissionWrites << "\n"
              << "pages_copied:      " << st.pagesCopied << "\n"
              << "pte_rewrites:      " << st.pteRewrites << "\n"
              << "tlb_flushes:       " << st.tlbFlushes << "\n"
              << "frames_freed:      " << st.framesFreed << "\n"
              << "entries_used:      " << st.entriesUsed << "\n"
              << "lookup_latency_cycles(" << machine.table().capacity() << "): "
              << neverland::lookupLatencyCycles(machine.table().capacity())
              << (neverland::zeroOverhead(machine.table().capacity())
                  ? " (hidden by cache access)" : " (exceeds cache window)")
              << "\n"
              << "user round-trip: "
              << (run.kind == neverland::RunResult::Kind::Halted
                  and machine.reg(1) == 42 ? "ok" : "FAILED")
              << " (r1=" << machine.reg(1) << ", steps=" << run.steps << ")\n";

    bool ok = run.kind == neverland::RunResult::Kind::Halted and machine.reg(1) == 42;
    return ok ? kExitPass : kExitMismatch;
  }

}

int main(int argc, char** argv)
{
  CLI::App app{"neverland: hardware-locked physical memory permission simulator"};
  app.require_subcommand(1);

  std::string scenarioPath, reportFormat = "text", only, asmPath;
  unsigned tableSize = 0;
  uint64_t asmBase = 0;

  auto addTableSize = [&tableSize](CLI::App* cmd) {
    cmd->add_option("--table-size", tableSize, "permission table capacity (4, 8 or 16)")
      ->check(CLI::IsMember({4, 8, 16}));
  };

  CLI::App* run = app.add_subcommand("run", "run one scenario file");
  run->add_option("scenario", scenarioPath, "scenario JSON file")->required();
  run->add_option("--report", reportFormat, "report format")
    ->check(CLI::IsMember({"json", "text"}));
  addTableSize(run);

  CLI::App* suite = app.add_subcommand("suite", "run the built-in attack suite");
  suite->add_option("--only", only, "run a single named scenario");
  suite->add_option("--report", reportFormat, "report format")
    ->check(CLI::IsMember({"json", "text"}));
  addTableSize(suite);

  CLI::App* asmCmd = app.add_subcommand("asm", "assemble a program and list it");
  asmCmd->add_option("file", asmPath, "assembly source")->required();
  asmCmd->add_option("--base", asmBase, "load base address");

  CLI::App* demo = app.add_subcommand("boot-demo",
                                      "boot the standard preset and print stats");
  addTableSize(demo);

  try
    {
      app.parse(argc, argv);
    }
  catch (const CLI::ParseError& e)
    {
      int code = app.exit(e);
      return code == 0 ? kExitPass : kExitUsage;
    }

  try
    {
      if (run->parsed())
        return cmdRun(scenarioPath, reportFormat, tableSize);
      if (suite->parsed())
        return cmdSuite(only, reportFormat, tableSize);
      if (asmCmd->parsed())
        return cmdAsm(asmPath, asmBase);
      if (demo->parsed())
        return cmdBootDemo(tableSize);
    }
  catch (const neverland::ScenarioError& e)
    {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }
  catch (const neverland::BootError& e)
    {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }
  catch (const neverland::AsmError& e)
    {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }
  catch (const std::exception& e)
    {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }

  return kExitUsage;
}

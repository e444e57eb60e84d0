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

#include <cstdio>
#include <fstream>
#include <string>

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

namespace
{
  struct CliResult
  {
    int exitCode = -1;
    std::string output;
  };

  CliResult runCli(const std::string& args, const std::string& env = "")
  {
    std::string cmd = env + (env.empty() ? "" : " ")
      + std::string(NEVERLAND_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);

    CliResult result;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0)
      result.output.append(buf, n);

    int status = pclose(pipe);
    result.exitCode = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
  }

  std::string scenarioPath(const std::string& file)
  { return std::string(NEVERLAND_SCENARIO_DIR) + "/" + file; }

  std::string writeTemp(const std::string& name, const std::string& content)
  {
    std::string path = "/tmp/neverland_test_" + name;
    std::ofstream out(path);
    out << content;
    return path;
  }
}

TEST_CASE("cli: suite passes and emits eight json reports")
{
  CliResult r = runCli("suite --report json");
  REQUIRE(r.exitCode == 0);

  auto doc = nlohmann::json::parse(r.output);
  REQUIRE(doc.is_array());
  REQUIRE(doc.size() == 8);
  for (const auto& rep : doc)
    {
      REQUIRE(rep.at("pass").get<bool>());
      REQUIRE(rep.contains("scenario"));
      REQUIRE(rep.contains("expectations"));
      REQUIRE(rep.contains("counters"));
      for (const auto& e : rep.at("expectations"))
        {
          REQUIRE(e.contains("kind"));
          REQUIRE(e.contains("expected"));
          REQUIRE(e.contains("observed"));
          REQUIRE(e.contains("pass"));
        }
    }
}

TEST_CASE("cli: suite --only filters by name")
{
  CliResult r = runCli("suite --only ret2usr-pte --report json");
  REQUIRE(r.exitCode == 0);
  auto doc = nlohmann::json::parse(r.output);
  REQUIRE(doc.size() == 1);
  REQUIRE(doc[0].at("scenario") == "ret2usr-pte");

  CliResult miss = runCli("suite --only no-such-scenario");
  REQUIRE(miss.exitCode == 2);
}

TEST_CASE("cli: run executes shipped scenario files")
{
  for (const char* file : {"syscall_table_hook.json", "dkom_probe.json",
                           "jit_region.json"})
    {
      CliResult r = runCli("run " + scenarioPath(file) + " --report json");
      INFO(file << ": " << r.output);
      REQUIRE(r.exitCode == 0);
      auto doc = nlohmann::json::parse(r.output);
      REQUIRE(doc.at("pass").get<bool>());
    }
}

TEST_CASE("cli: missing scenario file exits 2")
{
  CliResult r = runCli("run /nonexistent/missing.json");
  REQUIRE(r.exitCode == 2);
}

TEST_CASE("cli: schema violations exit 2")
{
  std::string bad = writeTemp("bad_schema.json",
                              R"({"name":"x","mystery_key":1,
                                  "expect":[{"kind":"table_unchanged"}]})");
  CliResult r = runCli("run " + bad);
  REQUIRE(r.exitCode == 2);
  REQUIRE(r.output.find("mystery_key") != std::string::npos);
}

TEST_CASE("cli: failed expectations exit 1")
{
  // The DKOM write succeeds, so expecting a denial must fail the scenario.
  std::string path = writeTemp("failing.json", R"({
    "name": "expected-to-fail",
    "exploit_steps": [
      {"op": "phys_write", "addr": "pa:kernel_data", "bytes": "ff"}
    ],
    "expect": [
      {"kind": "verdict_is", "verdict": "deny", "cause": "write_protected",
       "step": 0}
    ]
  })");
  CliResult r = runCli("run " + path);
  REQUIRE(r.exitCode == 1);
}

TEST_CASE("cli: boot-demo prints stats and honors --table-size")
{
  CliResult r = runCli("boot-demo");
  REQUIRE(r.exitCode == 0);
  REQUIRE(r.output.find("entries_used:      6") != std::string::npos);
  REQUIRE(r.output.find("user round-trip: ok") != std::string::npos);

  CliResult r16 = runCli("boot-demo --table-size 16");
  REQUIRE(r16.exitCode == 0);
  REQUIRE(r16.output.find("lookup_latency_cycles(16): 3") != std::string::npos);

  CliResult r4 = runCli("boot-demo --table-size 4");
  REQUIRE(r4.exitCode == 2);
  REQUIRE(r4.output.find("TableBudgetExceeded") != std::string::npos);

  CliResult r5 = runCli("boot-demo --table-size 5");
  REQUIRE(r5.exitCode == 2);
}

TEST_CASE("cli: asm lists encodings and reports errors with line numbers")
{
  std::string good = writeTemp("good.s", "start:\n  li r1, 8\n  ecall\n  halt\n");
  CliResult r = runCli("asm " + good);
  REQUIRE(r.exitCode == 0);
  REQUIRE(r.output.find("halt") != std::string::npos);
  REQUIRE(r.output.find("start") != std::string::npos);

  std::string bad = writeTemp("bad.s", "halt\nbogus r1, r2\n");
  CliResult e = runCli("asm " + bad);
  REQUIRE(e.exitCode == 2);
  REQUIRE(e.output.find("line 2") != std::string::npos);
}

TEST_CASE("cli: NEVERLAND_TABLE_BASE moves the MMIO window")
{
  CliResult ok = runCli("suite --report json", "NEVERLAND_TABLE_BASE=0xe8000000");
  REQUIRE(ok.exitCode == 0);
  auto doc = nlohmann::json::parse(ok.output);
  REQUIRE(doc.size() == 8);

  CliResult bad = runCli("boot-demo", "NEVERLAND_TABLE_BASE=zzz");
  REQUIRE(bad.exitCode == 2);
}

TEST_CASE("cli: usage errors exit 2")
{
  REQUIRE(runCli("").exitCode == 2);
  REQUIRE(runCli("run").exitCode == 2);
  REQUIRE(runCli("suite --report yaml").exitCode == 2);
}

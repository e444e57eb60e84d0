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

#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "Harness.hpp"

namespace neverland
{

  using Json = nlohmann::json;

  inline std::vector<uint8_t> bytesFromHex(const std::string& hex)
  {
    if (hex.size() % 2 != 0)
      throw ScenarioError("hex string has odd length");
    std::vector<uint8_t> out;
    out.reserve(hex.size() / 2);
    auto nibble = [](char c) -> int {
      if (c >= '0' and c <= '9') return c - '0';
      if (c >= 'a' and c <= 'f') return c - 'a' + 10;
      if (c >= 'A' and c <= 'F') return c - 'A' + 10;
      return -1;
    };
    for (size_t i = 0; i < hex.size(); i += 2)
      {
        int hi = nibble(hex[i]), lo = nibble(hex[i + 1]);
        if (hi < 0 or lo < 0)
          throw ScenarioError("malformed hex string");
        out.push_back(uint8_t(hi << 4 | lo));
      }
    return out;
  }

  namespace detail
  {
    inline void requireKeys(const Json& obj, std::initializer_list<const char*> allowed,
                            const std::string& where)
    {
      if (not obj.is_object())
        throw ScenarioError(where + ": expected an object");
      for (const auto& [key, value] : obj.items())
        {
          bool ok = false;
          for (const char* a : allowed)
            if (key == a)
              {
                ok = true;
                break;
              }
          if (not ok)
            throw ScenarioError(where + ": unknown key '" + key + "'");
        }
    }

    inline uint64_t parseU64(const Json& v, const std::string& where)
    {
      if (v.is_number_unsigned() or v.is_number_integer())
        return v.get<uint64_t>();
      if (v.is_string())
        {
          try
            {
              return std::stoull(v.get<std::string>(), nullptr, 0);
            }
          catch (const std::exception&)
            {
              throw ScenarioError(where + ": malformed number");
            }
        }
      throw ScenarioError(where + ": expected a number or numeric string");
    }

    inline AddrExpr parseAddr(const Json& v, const std::string& where)
    {
      if (v.is_string())
        return AddrExpr::parse(v.get<std::string>());
      if (v.is_number_unsigned() or v.is_number_integer())
        return AddrExpr::raw(v.get<uint64_t>());
      throw ScenarioError(where + ": expected an address");
    }

    inline uint16_t parseCsr(const Json& v, const std::string& where)
    {
      if (v.is_string())
        {
          if (auto n = csrNumberFromName(v.get<std::string>()))
            return *n;
          throw ScenarioError(where + ": unknown csr '" + v.get<std::string>() + "'");
        }
      return uint16_t(parseU64(v, where));
    }

    inline TrapCause parseTrapCause(const std::string& s, const std::string& where)
    {
      for (unsigned i = 0; i <= unsigned(TrapCause::IllegalInstruction); ++i)
        if (s == toString(TrapCause(i)))
          return TrapCause(i);
      throw ScenarioError(where + ": unknown trap cause '" + s + "'");
    }

    inline DenyCause parseDenyCause(const std::string& s, const std::string& where)
    {
      for (unsigned i = 0; i <= unsigned(DenyCause::UserAccessToPrivDenied); ++i)
        if (s == toString(DenyCause(i)))
          return DenyCause(i);
      throw ScenarioError(where + ": unknown deny cause '" + s + "'");
    }

    /// Segment sources: a hex string, an "@file" reference (relative to the
    /// scenario file), or {"pages": N, "seed": S} synthetic content.
    inline std::vector<uint8_t> parseSegment(const Json& v, const std::string& baseDir,
                                             const std::string& where)
    {
      if (v.is_string())
        {
          std::string s = v.get<std::string>();
          if (not s.empty() and s[0] == '@')
            {
              std::string path = s.substr(1);
              if (not path.empty() and path[0] != '/' and not baseDir.empty())
                path = baseDir + "/" + path;
              std::ifstream in(path, std::ios::binary);
              if (not in)
                throw ScenarioError(where + ": cannot open '" + path + "'");
              return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
            }
          return bytesFromHex(s);
        }
      if (v.is_object())
        {
          requireKeys(v, {"pages", "seed"}, where);
          uint64_t pages = parseU64(v.at("pages"), where + ".pages");
          uint64_t seed = v.contains("seed") ? parseU64(v.at("seed"), where + ".seed") : 1;
          return patternBytes(pages * kPageSize, uint8_t(seed));
        }
      throw ScenarioError(where + ": expected hex string, @file or {pages, seed}");
    }
  }

  /// Parse a scenario document. baseDir anchors @file segment references.
  ///
  /// Schema (unknown keys are rejected):
  ///   name: string (required)
  ///   boot: { pool_bytes, jit_bytes, defrag, user_entry,
  ///           arm, lock_stvec, seal_unused }
  ///   kernel: { rodata, config_flags, data: segments;
  ///             syscall_handlers: [label, ...] }
  ///   modules: [ { name, text, data, frames: [pfn, ...] } ]
  ///   programs: { user, kernel: assembly text }
  ///   exploit_steps: [ { op: phys_write|pte_corrupt|csr_write|mmio_write|
  ///                          jump_supervisor, ... } ]
  ///   expect: [ { kind: trap_is|verdict_is|csr_equals|mem_equals|
  ///                     table_unchanged|runs_to_halt, ... } ]
  ///   run: bool, max_steps: number
  inline Scenario parseScenario(const Json& doc, const std::string& baseDir = "")
  {
    using detail::requireKeys;
    using detail::parseU64;
    using detail::parseAddr;

    requireKeys(doc, {"name", "boot", "kernel", "modules", "programs",
                      "exploit_steps", "expect", "run", "max_steps"}, "scenario");

    Scenario s;
    if (not doc.contains("name") or not doc.at("name").is_string())
      throw ScenarioError("scenario: missing name");
    s.name = doc.at("name").get<std::string>();

    if (doc.contains("boot"))
      {
        const Json& b = doc.at("boot");
        requireKeys(b, {"preset", "pool_bytes", "jit_bytes", "defrag", "user_entry",
                        "arm", "lock_stvec", "seal_unused"}, "boot");
        if (b.contains("preset") and b.at("preset") != "standard")
          throw ScenarioError("boot.preset: only 'standard' is defined");
        if (b.contains("pool_bytes"))
          s.boot.poolBytes = parseU64(b.at("pool_bytes"), "boot.pool_bytes");
        if (b.contains("jit_bytes"))
          s.boot.jitBytes = parseU64(b.at("jit_bytes"), "boot.jit_bytes");
        if (b.contains("defrag"))
          s.boot.defragEnabled = b.at("defrag").get<bool>();
        if (b.contains("user_entry"))
          s.boot.userEntry = parseU64(b.at("user_entry"), "boot.user_entry");
        if (b.contains("arm"))
          s.boot.armEnforce = b.at("arm").get<bool>();
        if (b.contains("lock_stvec"))
          s.boot.lockStvec = b.at("lock_stvec").get<bool>();
        if (b.contains("seal_unused"))
          s.boot.sealUnused = b.at("seal_unused").get<bool>();
      }

    if (doc.contains("programs"))
      {
        const Json& p = doc.at("programs");
        requireKeys(p, {"user", "kernel"}, "programs");
        if (p.contains("user"))
          s.userProgram = p.at("user").get<std::string>();
        if (p.contains("kernel"))
          s.kernelProgram = p.at("kernel").get<std::string>();
      }

    if (doc.contains("kernel"))
      {
        const Json& k = doc.at("kernel");
        requireKeys(k, {"rodata", "config_flags", "data", "syscall_handlers"},
                    "kernel");
        if (k.contains("syscall_handlers"))
          for (const Json& h : k.at("syscall_handlers"))
            s.syscallHandlers.push_back(h.get<std::string>());
        // Segment overrides ride on a custom kernel program; without one the
        // preset kernel already carries its segments.
        if ((k.contains("rodata") or k.contains("config_flags") or k.contains("data"))
            and s.kernelProgram.empty())
          throw ScenarioError("kernel segments need programs.kernel");
      }

    if (doc.contains("modules"))
      {
        s.modules.emplace();
        for (size_t i = 0; i < doc.at("modules").size(); ++i)
          {
            const Json& mj = doc.at("modules")[i];
            std::string where = "modules[" + std::to_string(i) + "]";
            requireKeys(mj, {"name", "text", "data", "frames"}, where);
            ModuleBlob blob;
            blob.name = mj.contains("name") ? mj.at("name").get<std::string>()
              : "module" + std::to_string(i);
            if (not mj.contains("text"))
              throw ScenarioError(where + ": missing text");
            blob.text = detail::parseSegment(mj.at("text"), baseDir, where + ".text");
            if (mj.contains("data"))
              blob.data = detail::parseSegment(mj.at("data"), baseDir, where + ".data");
            if (mj.contains("frames"))
              for (const Json& f : mj.at("frames"))
                blob.requestedFrames.push_back(parseU64(f, where + ".frames"));
            s.modules->push_back(std::move(blob));
          }
      }

    if (doc.contains("exploit_steps"))
      {
        for (size_t i = 0; i < doc.at("exploit_steps").size(); ++i)
          {
            const Json& st = doc.at("exploit_steps")[i];
            std::string where = "exploit_steps[" + std::to_string(i) + "]";
            if (not st.is_object() or not st.contains("op"))
              throw ScenarioError(where + ": missing op");
            std::string op = st.at("op").get<std::string>();

            if (op == "phys_write")
              {
                requireKeys(st, {"op", "addr", "bytes", "value"}, where);
                ExploitStep step;
                step.kind = ExploitStep::Kind::PhysWrite;
                step.addr = parseAddr(st.at("addr"), where + ".addr");
                if (st.contains("bytes"))
                  step.bytes = bytesFromHex(st.at("bytes").get<std::string>());
                if (st.contains("value"))
                  step.value = parseAddr(st.at("value"), where + ".value");
                if (step.bytes.empty() and not step.value)
                  throw ScenarioError(where + ": needs bytes or value");
                s.steps.push_back(std::move(step));
              }
            else if (op == "pte_corrupt")
              {
                requireKeys(st, {"op", "va", "pa", "writable", "executable", "user"},
                            where);
                ExploitStep step;
                step.kind = ExploitStep::Kind::PteCorrupt;
                step.pteVa = parseAddr(st.at("va"), where + ".va");
                step.ptePa = parseAddr(st.at("pa"), where + ".pa");
                if (st.contains("writable"))
                  step.pteWritable = st.at("writable").get<bool>();
                if (st.contains("executable"))
                  step.pteExecutable = st.at("executable").get<bool>();
                if (st.contains("user"))
                  step.pteUserAccessible = st.at("user").get<bool>();
                s.steps.push_back(std::move(step));
              }
            else if (op == "csr_write")
              {
                requireKeys(st, {"op", "csr", "value"}, where);
                ExploitStep step;
                step.kind = ExploitStep::Kind::CsrWrite;
                step.csrNumber = detail::parseCsr(st.at("csr"), where + ".csr");
                step.value = parseAddr(st.at("value"), where + ".value");
                s.steps.push_back(std::move(step));
              }
            else if (op == "mmio_write")
              {
                requireKeys(st, {"op", "offset", "value"}, where);
                ExploitStep step;
                step.kind = ExploitStep::Kind::MmioWrite;
                step.mmioOffset = parseU64(st.at("offset"), where + ".offset");
                step.mmioValue = parseU64(st.at("value"), where + ".value");
                s.steps.push_back(std::move(step));
              }
            else if (op == "jump_supervisor")
              {
                requireKeys(st, {"op", "target"}, where);
                ExploitStep step;
                step.kind = ExploitStep::Kind::JumpSupervisor;
                step.addr = parseAddr(st.at("target"), where + ".target");
                s.steps.push_back(std::move(step));
              }
            else
              throw ScenarioError(where + ": unknown op '" + op + "'");
          }
      }

    if (not doc.contains("expect") or doc.at("expect").empty())
      throw ScenarioError("scenario: expect[] must be non-empty");
    for (size_t i = 0; i < doc.at("expect").size(); ++i)
      {
        const Json& ex = doc.at("expect")[i];
        std::string where = "expect[" + std::to_string(i) + "]";
        if (not ex.is_object() or not ex.contains("kind"))
          throw ScenarioError(where + ": missing kind");
        std::string kind = ex.at("kind").get<std::string>();
        int step = ex.contains("step") ? int(parseU64(ex.at("step"), where + ".step"))
          : -1;

        if (kind == "trap_is")
          {
            requireKeys(ex, {"kind", "cause", "step"}, where);
            s.expectations.push_back(Expectation::trapIs(
              detail::parseTrapCause(ex.at("cause").get<std::string>(),
                                     where + ".cause"), step));
          }
        else if (kind == "verdict_is")
          {
            requireKeys(ex, {"kind", "verdict", "cause", "step"}, where);
            std::string v = ex.at("verdict").get<std::string>();
            AccessVerdict verdict = AccessVerdict::allow();
            if (v == "deny")
              verdict = AccessVerdict::deny(detail::parseDenyCause(
                ex.at("cause").get<std::string>(), where + ".cause"));
            else if (v != "allow")
              throw ScenarioError(where + ": verdict must be allow or deny");
            s.expectations.push_back(Expectation::verdictIs(verdict, step));
          }
        else if (kind == "csr_equals")
          {
            requireKeys(ex, {"kind", "csr", "value"}, where);
            s.expectations.push_back(Expectation::csrEquals(
              detail::parseCsr(ex.at("csr"), where + ".csr"),
              parseAddr(ex.at("value"), where + ".value")));
          }
        else if (kind == "mem_equals")
          {
            requireKeys(ex, {"kind", "addr", "expect", "length"}, where);
            AddrExpr addr = parseAddr(ex.at("addr"), where + ".addr");
            std::string ref = ex.at("expect").get<std::string>();
            if (ref == "original")
              {
                uint64_t length = ex.contains("length")
                  ? parseU64(ex.at("length"), where + ".length") : 8;
                s.expectations.push_back(Expectation::memEqualsOriginal(addr, length));
              }
            else if (ref.rfind("step:", 0) == 0)
              s.expectations.push_back(Expectation::memEqualsWritten(
                addr, int(std::stoul(ref.substr(5)))));
            else if (ref.rfind("hex:", 0) == 0)
              s.expectations.push_back(Expectation::memEquals(
                addr, bytesFromHex(ref.substr(4))));
            else
              throw ScenarioError(where + ": expect must be original, step:N or hex:...");
          }
        else if (kind == "table_unchanged")
          {
            requireKeys(ex, {"kind"}, where);
            s.expectations.push_back(Expectation::tableUnchanged());
          }
        else if (kind == "runs_to_halt")
          {
            requireKeys(ex, {"kind", "step"}, where);
            s.expectations.push_back(Expectation::runsToHalt(step));
          }
        else
          throw ScenarioError(where + ": unknown kind '" + kind + "'");
      }

    if (doc.contains("run"))
      s.runAfterSteps = doc.at("run").get<bool>();
    if (doc.contains("max_steps"))
      s.maxSteps = detail::parseU64(doc.at("max_steps"), "max_steps");

    return s;
  }

  inline Scenario parseScenarioText(const std::string& text,
                                    const std::string& baseDir = "")
  {
    Json doc;
    try
      {
        doc = Json::parse(text);
      }
    catch (const Json::exception& e)
      {
        throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
      }
    return parseScenario(doc, baseDir);
  }

  // ----- Report serialization -----

  inline Json toJson(const BootStats& b)
  {
    return Json{
      {"permission_writes", b.permissionWrites},
      {"pages_copied", b.pagesCopied},
      {"pte_rewrites", b.pteRewrites},
      {"tlb_flushes", b.tlbFlushes},
      {"frames_freed", b.framesFreed},
      {"entries_used", b.entriesUsed},
    };
  }

  inline Json toJson(const ScenarioReport& r)
  {
    Json expectations = Json::array();
    for (const auto& e : r.expectations)
      expectations.push_back(Json{
        {"kind", e.kind},
        {"expected", e.expected},
        {"observed", e.observed},
        {"pass", e.pass},
      });

    Json denials = Json::object();
    for (const auto& [cause, n] : r.counters.denials)
      denials[cause] = n;

    return Json{
      {"scenario", r.scenario},
      {"expectations", expectations},
      {"counters", Json{
        {"cycles", r.counters.cycles},
        {"lookups", r.counters.lookups},
        {"denials", denials},
        {"boot", toJson(r.counters.boot)},
      }},
      {"pass", r.pass},
    };
  }

  inline BootStats bootStatsFromJson(const Json& j)
  {
    BootStats b;
    b.permissionWrites = j.at("permission_writes").get<uint64_t>();
    b.pagesCopied = j.at("pages_copied").get<uint64_t>();
    b.pteRewrites = j.at("pte_rewrites").get<uint64_t>();
    b.tlbFlushes = j.at("tlb_flushes").get<uint64_t>();
    b.framesFreed = j.at("frames_freed").get<uint64_t>();
    b.entriesUsed = j.at("entries_used").get<uint64_t>();
    return b;
  }

  inline ScenarioReport reportFromJson(const Json& j)
  {
    ScenarioReport r;
    r.scenario = j.at("scenario").get<std::string>();
    for (const Json& e : j.at("expectations"))
      r.expectations.push_back(ExpectationResult{
        e.at("kind").get<std::string>(),
        e.at("expected").get<std::string>(),
        e.at("observed").get<std::string>(),
        e.at("pass").get<bool>(),
      });
    const Json& c = j.at("counters");
    r.counters.cycles = c.at("cycles").get<uint64_t>();
    r.counters.lookups = c.at("lookups").get<uint64_t>();
    for (const auto& [cause, n] : c.at("denials").items())
      r.counters.denials[cause] = n.get<uint64_t>();
    r.counters.boot = bootStatsFromJson(c.at("boot"));
    r.pass = j.at("pass").get<bool>();
    return r;
  }

  /// Human-readable report rendering, one line per expectation.
  inline std::string reportText(const ScenarioReport& r)
  {
    std::ostringstream os;
    os << (r.pass ? "PASS " : "FAIL ") << r.scenario << "\n";
    for (const auto& e : r.expectations)
      os << "  " << (e.pass ? "pass" : "FAIL") << "  " << e.kind
         << "  expected=" << e.expected << "  observed=" << e.observed << "\n";
    return os.str();
  }

}

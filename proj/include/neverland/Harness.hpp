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

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "Boot.hpp"
#include "Machine.hpp"

namespace neverland
{

  /// A scenario that cannot be run: unresolvable symbol, malformed step,
  /// schema violation.
  class ScenarioError : public std::runtime_error
  {
  public:
    explicit ScenarioError(const std::string& message)
      : std::runtime_error(message)
    { }
  };

  /// A physical or virtual address written symbolically: a raw number, or
  /// `pa:symbol+offset` / `va:symbol+offset` resolved against the boot
  /// layout when the scenario runs.
  struct AddrExpr
  {
    enum class Space : uint8_t { Raw, Pa, Va };

    Space space = Space::Raw;
    std::string symbol;
    uint64_t offset = 0;

    static AddrExpr raw(uint64_t value)
    { return {Space::Raw, "", value}; }

    static AddrExpr pa(std::string sym, uint64_t off = 0)
    { return {Space::Pa, std::move(sym), off}; }

    static AddrExpr va(std::string sym, uint64_t off = 0)
    { return {Space::Va, std::move(sym), off}; }

    /// Accepts "0x1234", "4660", "pa:name", "va:name+0x10".
    static AddrExpr parse(const std::string& text)
    {
      Space space = Space::Raw;
      std::string rest = text;
      if (rest.rfind("pa:", 0) == 0)
        {
          space = Space::Pa;
          rest = rest.substr(3);
        }
      else if (rest.rfind("va:", 0) == 0)
        {
          space = Space::Va;
          rest = rest.substr(3);
        }

      if (space == Space::Raw)
        {
          try
            {
              return raw(std::stoull(rest, nullptr, 0));
            }
          catch (const std::exception&)
            {
              throw ScenarioError("malformed address '" + text + "'");
            }
        }

      uint64_t off = 0;
      if (auto plus = rest.find('+'); plus != std::string::npos)
        {
          try
            {
              off = std::stoull(rest.substr(plus + 1), nullptr, 0);
            }
          catch (const std::exception&)
            {
              throw ScenarioError("malformed address offset in '" + text + "'");
            }
          rest = rest.substr(0, plus);
        }
      AddrExpr e{space, rest, off};
      if (rest.empty())
        throw ScenarioError("empty symbol in address '" + text + "'");
      return e;
    }

    uint64_t resolve(const BootLayout& layout) const
    {
      if (space == Space::Raw)
        return offset;
      const auto& table = space == Space::Pa ? layout.paSymbols : layout.vaSymbols;
      auto it = table.find(symbol);
      if (it == table.end())
        throw ScenarioError("unresolvable symbol '" + symbol + "' in "
                            + (space == Space::Pa ? std::string("pa") : "va")
                            + " space");
      return it->second + offset;
    }

    std::string toString() const
    {
      std::ostringstream os;
      if (space == Space::Raw)
        {
          os << "0x" << std::hex << offset;
          return os.str();
        }
      os << (space == Space::Pa ? "pa:" : "va:") << symbol;
      if (offset)
        os << "+0x" << std::hex << offset;
      return os.str();
    }

    bool operator==(const AddrExpr&) const = default;
  };

  /// One attacker capability, granted directly: these model kernel bugs, so
  /// they bypass software checks and page permissions, but they never bypass
  /// the permission table or register locks. The hardware is the only thing
  /// under test.
  struct ExploitStep
  {
    enum class Kind : uint8_t
      {
       PhysWrite,        // arbitrary physical write; goes through the table
       PteCorrupt,       // rewrite one page-map record (and flush the TLB)
       CsrWrite,         // supervisor CSR write; register locks apply
       MmioWrite,        // table register write; entry/enforce locks apply
       JumpSupervisor    // hijacked control transfer: mode=S, pc=target, run
      };

    Kind kind = Kind::PhysWrite;

    AddrExpr addr;                  // PhysWrite paddr / JumpSupervisor vaddr
    std::vector<uint8_t> bytes;     // PhysWrite literal payload
    std::optional<AddrExpr> value;  // PhysWrite 8-byte payload / CsrWrite value
    uint16_t csrNumber = 0;         // CsrWrite
    uint64_t mmioOffset = 0;        // MmioWrite offset into the window
    uint64_t mmioValue = 0;         // MmioWrite value
    AddrExpr pteVa;                 // PteCorrupt page virtual address
    AddrExpr ptePa;                 // PteCorrupt new frame physical address
    bool pteWritable = true;        // PteCorrupt permission bits
    bool pteExecutable = true;
    bool pteUserAccessible = false;

    static ExploitStep physWrite(AddrExpr addr, std::vector<uint8_t> bytes)
    {
      ExploitStep s;
      s.kind = Kind::PhysWrite;
      s.addr = std::move(addr);
      s.bytes = std::move(bytes);
      return s;
    }

    static ExploitStep physWriteValue(AddrExpr addr, AddrExpr value)
    {
      ExploitStep s;
      s.kind = Kind::PhysWrite;
      s.addr = std::move(addr);
      s.value = std::move(value);
      return s;
    }

    static ExploitStep pteCorrupt(AddrExpr va, AddrExpr pa, bool writable,
                                  bool executable, bool userAccessible)
    {
      ExploitStep s;
      s.kind = Kind::PteCorrupt;
      s.pteVa = std::move(va);
      s.ptePa = std::move(pa);
      s.pteWritable = writable;
      s.pteExecutable = executable;
      s.pteUserAccessible = userAccessible;
      return s;
    }

    static ExploitStep csrWrite(uint16_t number, AddrExpr value)
    {
      ExploitStep s;
      s.kind = Kind::CsrWrite;
      s.csrNumber = number;
      s.value = std::move(value);
      return s;
    }

    static ExploitStep mmioWrite(uint64_t offset, uint64_t value)
    {
      ExploitStep s;
      s.kind = Kind::MmioWrite;
      s.mmioOffset = offset;
      s.mmioValue = value;
      return s;
    }

    static ExploitStep jumpSupervisor(AddrExpr target)
    {
      ExploitStep s;
      s.kind = Kind::JumpSupervisor;
      s.addr = std::move(target);
      return s;
    }
  };

  /// A machine-checkable claim about the final state or the execution trace.
  /// `step` pins the claim to one exploit step's record; -1 means the last
  /// record that produced the relevant observation.
  struct Expectation
  {
    enum class Kind : uint8_t
      { TrapIs, VerdictIs, CsrEquals, MemEquals, TableUnchanged, RunsToHalt };

    /// What MemEquals compares against.
    enum class MemRef : uint8_t { Literal, OriginalContent, WrittenByStep };

    Kind kind = Kind::TableUnchanged;
    int step = -1;

    TrapCause trap = TrapCause::Syscall;              // TrapIs
    std::optional<AccessVerdict> verdict;             // VerdictIs
    uint16_t csrNumber = 0;                           // CsrEquals
    AddrExpr csrValue;                                // CsrEquals expected value
    AddrExpr addr;                                    // MemEquals paddr
    MemRef memRef = MemRef::Literal;                  // MemEquals reference
    std::vector<uint8_t> bytes;                       // MemEquals literal
    uint64_t length = 8;                              // MemEquals original length
    int memStep = -1;                                 // MemEquals WrittenByStep

    static Expectation trapIs(TrapCause cause, int step = -1)
    {
      Expectation e;
      e.kind = Kind::TrapIs;
      e.trap = cause;
      e.step = step;
      return e;
    }

    static Expectation verdictIs(AccessVerdict v, int step = -1)
    {
      Expectation e;
      e.kind = Kind::VerdictIs;
      e.verdict = v;
      e.step = step;
      return e;
    }

    static Expectation csrEquals(uint16_t number, AddrExpr value)
    {
      Expectation e;
      e.kind = Kind::CsrEquals;
      e.csrNumber = number;
      e.csrValue = std::move(value);
      return e;
    }

    static Expectation memEqualsOriginal(AddrExpr addr, uint64_t length)
    {
      Expectation e;
      e.kind = Kind::MemEquals;
      e.addr = std::move(addr);
      e.memRef = MemRef::OriginalContent;
      e.length = length;
      return e;
    }

    static Expectation memEqualsWritten(AddrExpr addr, int step)
    {
      Expectation e;
      e.kind = Kind::MemEquals;
      e.addr = std::move(addr);
      e.memRef = MemRef::WrittenByStep;
      e.memStep = step;
      return e;
    }

    static Expectation memEquals(AddrExpr addr, std::vector<uint8_t> bytes)
    {
      Expectation e;
      e.kind = Kind::MemEquals;
      e.addr = std::move(addr);
      e.memRef = MemRef::Literal;
      e.bytes = std::move(bytes);
      return e;
    }

    static Expectation tableUnchanged()
    {
      Expectation e;
      e.kind = Kind::TableUnchanged;
      return e;
    }

    static Expectation runsToHalt(int step = -1)
    {
      Expectation e;
      e.kind = Kind::RunsToHalt;
      e.step = step;
      return e;
    }
  };

  /// A declarative attack / boot script against one freshly booted machine.
  struct Scenario
  {
    std::string name;

    // Boot setup: the standard preset with these overrides applied.
    BootConfig boot;
    bool bootIsPreset = true;              // start from standardPreset() config
    std::optional<KernelImage> kernel;     // custom image (else preset kernel)
    std::optional<std::vector<ModuleBlob>> modules;

    std::string userProgram;               // asm text; empty = preset default
    std::string kernelProgram;             // asm text; empty = preset kernel
    std::vector<std::string> syscallHandlers;  // labels, custom kernel program

    std::vector<ExploitStep> steps;
    std::vector<Expectation> expectations;

    bool runAfterSteps = false;            // run from the post-boot user entry
    uint64_t maxSteps = 10'000;

    Scenario()
    { boot = standardPreset().config; }
  };

  struct ExpectationResult
  {
    std::string kind;
    std::string expected;
    std::string observed;
    bool pass = false;

    bool operator==(const ExpectationResult&) const = default;
  };

  struct CountersSnapshot
  {
    uint64_t cycles = 0;
    uint64_t lookups = 0;
    std::map<std::string, uint64_t> denials;
    BootStats boot;

    bool operator==(const CountersSnapshot&) const = default;
  };

  struct ScenarioReport
  {
    std::string scenario;
    std::vector<ExpectationResult> expectations;
    CountersSnapshot counters;
    bool pass = false;

    bool operator==(const ScenarioReport&) const = default;
  };

  /// Options applied on top of a scenario, mostly for the CLI and for
  /// sensitivity testing.
  struct RunOptions
  {
    unsigned tableCapacity = 0;        // 0 = default (8)
    uint64_t tableBase = 0;            // 0 = default window base
    // Protection mutations: deliberately weaken one layer to prove the
    // harness notices. All off for a normal run.
    bool disableArm = false;
    bool unlockStvec = false;
    bool unsealSpares = false;
  };

  /// Executes one scenario: boot, exploit steps in order, optional user-mode
  /// run, then expectation evaluation. Kept as a class so tests and the
  /// acceptance suite can inspect the machine afterwards.
  class ScenarioRunner
  {
  public:

    struct StepRecord
    {
      ExploitStep::Kind kind = ExploitStep::Kind::PhysWrite;
      bool isRun = false;                       // JumpSupervisor or final run
      AccessVerdict verdict = AccessVerdict::allow();
      bool hasVerdict = false;
      std::vector<uint8_t> written;             // PhysWrite payload
      uint64_t writtenAddr = 0;
      RunResult run;
      std::vector<TrapCause> traps;
    };

    explicit ScenarioRunner(const Scenario& scenario, const RunOptions& opts = {})
      : scenario_(scenario), opts_(opts),
        machine_(makeConfig(opts))
    { }

    Machine& machine() { return machine_; }
    const BootLayout& layout() const { return layout_; }
    const BootStats& bootStats() const { return bootStats_; }

    ScenarioReport runAll()
    {
      boot();
      snapshotOriginals();
      applySteps();
      return evaluate();
    }

    void boot()
    {
      StandardPreset preset = standardPreset();

      BootConfig cfg = scenario_.boot;
      if (opts_.disableArm)
        cfg.armEnforce = false;
      if (opts_.unlockStvec)
        cfg.lockStvec = false;
      if (opts_.unsealSpares)
        cfg.sealUnused = false;

      KernelImage image = scenario_.kernel ? *scenario_.kernel : preset.image;
      std::vector<ModuleBlob> modules =
        scenario_.modules ? *scenario_.modules : preset.modules;

      if (not scenario_.kernelProgram.empty())
        image = buildKernelImage(scenario_.kernelProgram, scenario_.syscallHandlers);

      Program user = assemble(scenario_.userProgram.empty()
                              ? standardUserSource() : scenario_.userProgram.c_str(),
                              cfg.userEntry);
      cfg.userProgram = user.bytes();

      machine_.reset();
      BootResult result = loadAndBoot(machine_, image, modules, cfg);
      bootStats_ = result.stats;
      layout_ = result.layout;

      // User program labels become resolvable addresses too.
      for (const auto& [name, va] : user.symbols)
        {
          layout_.vaSymbols[name] = va;
          layout_.paSymbols[name] =
            layout_.userRegion.pa + (va - layout_.userRegion.va);
        }

      tableSnapshot_ = snapshotTable();
      machine_.clearTrapLog();
      booted_ = true;
    }

    void applySteps()
    {
      for (const auto& step : scenario_.steps)
        applyStep(step);

      if (scenario_.runAfterSteps)
        {
          StepRecord rec;
          rec.isRun = true;
          size_t trapMark = machine_.trapLog().size();
          rec.run = machine_.run(scenario_.maxSteps);
          rec.traps.assign(machine_.trapLog().begin() + trapMark,
                           machine_.trapLog().end());
          records_.push_back(std::move(rec));
        }
    }

    ScenarioReport evaluate()
    {
      ScenarioReport report;
      report.scenario = scenario_.name;
      report.pass = true;

      if (scenario_.expectations.empty())
        throw ScenarioError("scenario '" + scenario_.name + "' has no expectations");

      for (const auto& e : scenario_.expectations)
        {
          ExpectationResult r = check(e);
          report.pass = report.pass and r.pass;
          report.expectations.push_back(std::move(r));
        }

      report.counters.cycles = machine_.cycleCount();
      report.counters.lookups = machine_.lookupCount();
      for (unsigned c = 0; c < 5; ++c)
        {
          DenyCause cause = DenyCause(c);
          if (uint64_t n = machine_.denialCount(cause))
            report.counters.denials[toString(cause)] = n;
        }
      report.counters.boot = bootStats_;
      return report;
    }

    const std::vector<StepRecord>& records() const
    { return records_; }

  private:

    static MachineConfig makeConfig(const RunOptions& opts)
    {
      MachineConfig mc;
      if (opts.tableCapacity)
        mc.tableCapacity = opts.tableCapacity;
      if (opts.tableBase)
        mc.tableBase = opts.tableBase;
      return mc;
    }

    /// Custom kernel program: trap vector at label trap_entry (or the text
    /// base), syscall table from the named handler labels.
    KernelImage buildKernelImage(const std::string& source,
                                 const std::vector<std::string>& handlers)
    {
      KernelImage img;
      img.textVbase = kKernelVbase;
      img.rodataVbase = kKernelVbase + 0x1000;
      img.syscallVbase = kKernelVbase + 0x2000;
      img.configVbase = kKernelVbase + 0x3000;
      img.dataVbase = kKernelVbase + 0x4000;

      Program prog;
      try
        {
          prog = assemble(source, img.textVbase,
                          {{"syscall_table", img.syscallVbase}});
        }
      catch (const AsmError& e)
        {
          throw ScenarioError(std::string("kernel program: ") + e.what());
        }
      img.text = prog.bytes();
      img.symbols = prog.symbols;
      img.entryPoint = img.textVbase;
      auto trap = prog.symbols.find("trap_entry");
      img.trapVector = trap == prog.symbols.end() ? img.textVbase : trap->second;
      for (const auto& label : handlers)
        {
          auto it = prog.symbols.find(label);
          if (it == prog.symbols.end())
            throw ScenarioError("syscall handler label '" + label + "' undefined");
          img.syscallTable.push_back(it->second);
        }
      img.rodata = patternBytes(256, 0x51);
      img.configFlags = {1, 0, 0, 0, 0, 0, 0, 0};
      img.data = patternBytes(512, 0xa3);
      return img;
    }

    std::vector<uint64_t> snapshotTable() const
    {
      std::vector<uint64_t> words;
      const PermissionTable& t = machine_.table();
      for (unsigned i = 0; i < t.capacity(); ++i)
        {
          uint64_t base = i * PermissionTable::kEntryStride;
          words.push_back(t.mmioRead(base + PermissionTable::kStartOffset));
          words.push_back(t.mmioRead(base + PermissionTable::kEndOffset));
          words.push_back(t.mmioRead(base + PermissionTable::kFlagsOffset));
        }
      words.push_back(t.mmioRead(PermissionTable::kEnforceOffset));
      return words;
    }

    void applyStep(const ExploitStep& step)
    {
      if (not booted_)
        throw ScenarioError("steps applied before boot");

      StepRecord rec;
      rec.kind = step.kind;
      bool hardwarePath = step.kind == ExploitStep::Kind::MmioWrite;
      std::vector<uint64_t> before;
      if (not hardwarePath)
        before = snapshotTable();

      switch (step.kind)
        {
        case ExploitStep::Kind::PhysWrite:
          {
            uint64_t paddr = step.addr.resolve(layout_);
            std::vector<uint8_t> payload = step.bytes;
            if (step.value)
              {
                uint64_t v = step.value->resolve(layout_);
                payload.resize(8);
                std::memcpy(payload.data(), &v, 8);
              }
            if (payload.empty())
              throw ScenarioError("phys_write with empty payload");
            if (machine_.inMmioWindow(paddr))
              hardwarePath = true;
            PhysResult r = machine_.physWrite(paddr, payload,
                                              PrivMode::Supervisor,
                                              machine_.csrs().sum());
            if (r.status == PhysStatus::Unmapped)
              throw ScenarioError("phys_write outside simulated memory");
            rec.verdict = r.verdict;
            rec.hasVerdict = true;
            rec.written = payload;
            rec.writtenAddr = paddr;
            break;
          }

        case ExploitStep::Kind::PteCorrupt:
          {
            uint64_t va = step.pteVa.resolve(layout_);
            uint64_t pa = step.ptePa.resolve(layout_);
            machine_.mapPage(va >> kPageShift,
                             PageEntry{pa >> kPageShift, true, step.pteWritable,
                                       step.pteExecutable, step.pteUserAccessible});
            // The exploit waits out (or forces) TLB eviction; model that as
            // an immediate flush so runs stay deterministic.
            machine_.flushTlb();
            break;
          }

        case ExploitStep::Kind::CsrWrite:
          {
            if (not step.value)
              throw ScenarioError("csr_write without a value");
            if (not machine_.csrWrite(step.csrNumber, step.value->resolve(layout_)))
              throw ScenarioError("csr_write to unknown csr "
                                  + std::to_string(step.csrNumber));
            break;
          }

        case ExploitStep::Kind::MmioWrite:
          {
            uint64_t paddr = machine_.config().tableBase + step.mmioOffset;
            std::array<uint8_t, 8> buf;
            std::memcpy(buf.data(), &step.mmioValue, 8);
            PhysResult r = machine_.physWrite(paddr, buf, PrivMode::Supervisor,
                                              machine_.csrs().sum());
            rec.verdict = r.verdict;
            rec.hasVerdict = true;
            break;
          }

        case ExploitStep::Kind::JumpSupervisor:
          {
            uint64_t target = step.addr.resolve(layout_);
            machine_.resume();
            machine_.setMode(PrivMode::Supervisor);
            machine_.setPc(target);
            rec.isRun = true;
            size_t trapMark = machine_.trapLog().size();
            rec.run = machine_.run(scenario_.maxSteps);
            rec.traps.assign(machine_.trapLog().begin() + trapMark,
                             machine_.trapLog().end());
            break;
          }
        }

      // Exploit primitives only reach the table through the MMIO hardware
      // path; anything else leaving a different table behind is a harness
      // bug, not an attack result.
      if (not hardwarePath and snapshotTable() != before)
        throw std::logic_error("exploit step mutated the table outside MMIO");

      records_.push_back(std::move(rec));
    }

    ExpectationResult check(const Expectation& e)
    {
      switch (e.kind)
        {
        case Expectation::Kind::TrapIs:
          {
            const StepRecord* rec = findRecord(e.step, [](const StepRecord& r) {
              return not r.traps.empty();
            });
            bool hit = false;
            std::string observed;
            if (rec)
              for (TrapCause c : rec->traps)
                {
                  observed += observed.empty() ? "" : ",";
                  observed += toString(c);
                  hit = hit or c == e.trap;
                }
            if (observed.empty())
              observed = "no traps";
            return {"trap_is", toString(e.trap), observed, hit};
          }

        case Expectation::Kind::VerdictIs:
          {
            const StepRecord* rec = findRecord(e.step, [](const StepRecord& r) {
              return r.hasVerdict;
            });
            if (not rec)
              return {"verdict_is", e.verdict->toString(), "no verdict recorded", false};
            return {"verdict_is", e.verdict->toString(), rec->verdict.toString(),
                    rec->verdict == *e.verdict};
          }

        case Expectation::Kind::CsrEquals:
          {
            uint64_t expected = e.csrValue.resolve(layout_);
            auto v = machine_.csrRead(e.csrNumber);
            if (not v)
              return {"csr_equals", hex(expected), "unknown csr", false};
            return {"csr_equals", hex(expected), hex(*v), *v == expected};
          }

        case Expectation::Kind::MemEquals:
          {
            uint64_t paddr = e.addr.resolve(layout_);
            std::vector<uint8_t> expected;
            switch (e.memRef)
              {
              case Expectation::MemRef::Literal:
                expected = e.bytes;
                break;
              case Expectation::MemRef::OriginalContent:
                expected = originalContent(paddr, e.length);
                break;
              case Expectation::MemRef::WrittenByStep:
                {
                  const StepRecord* rec = findRecord(e.memStep,
                                                     [](const StepRecord& r) {
                                                       return not r.written.empty();
                                                     });
                  if (not rec)
                    return {"mem_equals", "written payload", "no write recorded", false};
                  expected = rec->written;
                  break;
                }
              }
            std::vector<uint8_t> observed = machine_.debugReadBytes(paddr,
                                                                    expected.size());
            return {"mem_equals", hexBytes(expected), hexBytes(observed),
                    observed == expected};
          }

        case Expectation::Kind::TableUnchanged:
          {
            bool same = snapshotTable() == tableSnapshot_;
            return {"table_unchanged", "identical", same ? "identical" : "modified",
                    same};
          }

        case Expectation::Kind::RunsToHalt:
          {
            const StepRecord* rec = findRecord(e.step, [](const StepRecord& r) {
              return r.isRun;
            });
            if (not rec)
              return {"runs_to_halt", "halted", "no run recorded", false};
            const char* observed =
              rec->run.kind == RunResult::Kind::Halted ? "halted"
              : rec->run.kind == RunResult::Kind::DoubleFault ? "double_fault"
              : "step_limit";
            return {"runs_to_halt", "halted", observed,
                    rec->run.kind == RunResult::Kind::Halted};
          }
        }
      return {"?", "", "", false};
    }

    template <typename Pred>
    const StepRecord* findRecord(int step, Pred pred) const
    {
      if (step >= 0)
        {
          if (size_t(step) >= records_.size())
            throw ScenarioError("expectation references step "
                                + std::to_string(step) + " of "
                                + std::to_string(records_.size()));
          return &records_[size_t(step)];
        }
      for (auto it = records_.rbegin(); it != records_.rend(); ++it)
        if (pred(*it))
          return &*it;
      return nullptr;
    }

    /// Content as it was at lockdown. Reads the snapshot lazily: records the
    /// bytes on first request before any step ran.
    std::vector<uint8_t> originalContent(uint64_t paddr, uint64_t length)
    {
      auto key = std::make_pair(paddr, length);
      auto it = originals_.find(key);
      if (it == originals_.end())
        throw ScenarioError("mem_equals original content was not snapshotted");
      return it->second;
    }

  public:

    /// Pre-exploit snapshots for MemEquals(original). The runner takes them
    /// automatically for every such expectation right after boot.
    void snapshotOriginals()
    {
      for (const auto& e : scenario_.expectations)
        if (e.kind == Expectation::Kind::MemEquals
            and e.memRef == Expectation::MemRef::OriginalContent)
          {
            uint64_t paddr = e.addr.resolve(layout_);
            originals_[{paddr, e.length}] = machine_.debugReadBytes(paddr, e.length);
          }
    }

  private:

    static std::string hex(uint64_t v)
    {
      std::ostringstream os;
      os << "0x" << std::hex << v;
      return os.str();
    }

    static std::string hexBytes(const std::vector<uint8_t>& v)
    {
      static const char* digits = "0123456789abcdef";
      std::string s;
      for (uint8_t b : v)
        {
          s.push_back(digits[b >> 4]);
          s.push_back(digits[b & 0xf]);
        }
      return s;
    }

    Scenario scenario_;
    RunOptions opts_;
    Machine machine_;
    BootLayout layout_;
    BootStats bootStats_;
    std::vector<uint64_t> tableSnapshot_;
    std::vector<StepRecord> records_;
    std::map<std::pair<uint64_t, uint64_t>, std::vector<uint8_t>> originals_;
    bool booted_ = false;
  };

  /// Run one scenario start to finish.
  inline ScenarioReport runScenario(const Scenario& scenario,
                                    const RunOptions& opts = {})
  {
    ScenarioRunner runner(scenario, opts);
    runner.boot();
    runner.snapshotOriginals();
    runner.applySteps();
    return runner.evaluate();
  }

  /// The built-in attack catalog: the seven kernel-compromise vectors plus
  /// the JIT-region relaxation. Blocked vectors must be observably blocked;
  /// the two limited-protection rows are negative controls whose attacks
  /// must observably succeed.
  inline std::vector<Scenario> standardSuite()
  {
    std::vector<Scenario> suite;

    // 1. Syscall-table hooking: the table region is write-once.
    {
      Scenario s;
      s.name = "syscall-table-hook";
      s.steps = {ExploitStep::physWriteValue(AddrExpr::pa("syscall_table"),
                                             AddrExpr::va("user_entry"))};
      s.expectations = {
        Expectation::verdictIs(AccessVerdict::deny(DenyCause::WriteProtected), 0),
        Expectation::memEqualsOriginal(AddrExpr::pa("syscall_table"), 16),
        Expectation::tableUnchanged(),
      };
      suite.push_back(std::move(s));
    }

    // 2. Configuration-register hooking: stvec is locked after boot.
    {
      Scenario s;
      s.name = "config-register-hook";
      s.steps = {ExploitStep::csrWrite(csr::kStvec, AddrExpr::va("user_entry"))};
      s.expectations = {
        Expectation::csrEquals(csr::kStvec, AddrExpr::va("trap_entry")),
      };
      suite.push_back(std::move(s));
    }

    // 3. Runtime code patching: kernel and module text are locked.
    {
      Scenario s;
      s.name = "code-patch";
      s.steps = {
        ExploitStep::physWrite(AddrExpr::pa("kernel_text"),
                               {0x0e, 0x00, 0x00, 0x00, 0x0e, 0x00, 0x00, 0x00}),
        ExploitStep::physWrite(AddrExpr::pa("module_pool"),
                               {0x0e, 0x00, 0x00, 0x00, 0x0e, 0x00, 0x00, 0x00}),
      };
      s.expectations = {
        Expectation::verdictIs(AccessVerdict::deny(DenyCause::WriteProtected), 0),
        Expectation::verdictIs(AccessVerdict::deny(DenyCause::WriteProtected), 1),
        Expectation::memEqualsOriginal(AddrExpr::pa("kernel_text"), 8),
        Expectation::tableUnchanged(),
      };
      suite.push_back(std::move(s));
    }

    // 4. Code-pointer hooking (limited): the hook lands, and the hijacked
    // transfer reaches existing kernel code; it can never reach attacker
    // code in non-privileged memory.
    {
      Scenario s;
      s.name = "code-pointer-hook";
      s.steps = {
        ExploitStep::physWriteValue(AddrExpr::pa("kernel_data", 0x40),
                                    AddrExpr::va("kfunc_halt")),
        ExploitStep::jumpSupervisor(AddrExpr::va("kfunc_halt")),
        ExploitStep::jumpSupervisor(AddrExpr::va("user_entry")),
      };
      s.expectations = {
        Expectation::verdictIs(AccessVerdict::allow(), 0),
        Expectation::runsToHalt(1),
        Expectation::trapIs(TrapCause::TableFaultFetch, 2),
      };
      suite.push_back(std::move(s));
    }

    // 5. DKOM (limited): dynamic kernel data cannot be locked, so the write
    // goes through. This scenario passes when the attack succeeds.
    {
      Scenario s;
      s.name = "dkom-dynamic-data";
      s.steps = {
        ExploitStep::physWrite(AddrExpr::pa("kernel_data", 0x100),
                               {0xff, 0xee, 0xdd, 0xcc, 0xbb, 0xaa, 0x99, 0x88}),
      };
      s.expectations = {
        Expectation::verdictIs(AccessVerdict::allow(), 0),
        Expectation::memEqualsWritten(AddrExpr::pa("kernel_data", 0x100), 0),
        Expectation::tableUnchanged(),
      };
      suite.push_back(std::move(s));
    }

    // 6. Malicious driver after boot: sealed entries reject the new region,
    // and staged code in ordinary RAM is never supervisor-fetchable.
    {
      Scenario s;
      s.name = "malicious-driver-load";
      uint64_t spare = 6 * PermissionTable::kEntryStride;   // first sealed entry
      s.steps = {
        ExploitStep::mmioWrite(spare + PermissionTable::kStartOffset, 0x8000'0000),
        ExploitStep::mmioWrite(spare + PermissionTable::kEndOffset, 0x9000'0000),
        ExploitStep::mmioWrite(spare + PermissionTable::kFlagsOffset,
                               PermissionTable::kFlagPriv | PermissionTable::kFlagWrite
                               | PermissionTable::kFlagExec | PermissionTable::kFlagValid),
        ExploitStep::csrWrite(csr::kSum, AddrExpr::raw(1)),
        ExploitStep::physWrite(AddrExpr::pa("free_frame"),
                               {0x0e, 0x00, 0x00, 0x00}),   // halt
        ExploitStep::pteCorrupt(AddrExpr::raw(0x0060'0000), AddrExpr::pa("free_frame"),
                                false, true, false),
        ExploitStep::jumpSupervisor(AddrExpr::raw(0x0060'0000)),
      };
      s.expectations = {
        Expectation::tableUnchanged(),
        Expectation::verdictIs(AccessVerdict::allow(), 4),
        Expectation::trapIs(TrapCause::TableFaultFetch, 6),
      };
      suite.push_back(std::move(s));
    }

    // 7. ret2usr privilege escalation: a PTE made supervisor-executable
    // still cannot make user-resident code fetchable in supervisor mode.
    {
      Scenario s;
      s.name = "ret2usr-pte";
      s.steps = {
        ExploitStep::pteCorrupt(AddrExpr::va("user_entry"), AddrExpr::pa("user_entry"),
                                true, true, false),
        ExploitStep::jumpSupervisor(AddrExpr::va("user_entry")),
      };
      s.expectations = {
        Expectation::trapIs(TrapCause::TableFaultFetch, 1),
        Expectation::tableUnchanged(),
      };
      suite.push_back(std::move(s));
    }

    // 8. JIT-region relaxation: the pre-allocated region is writable and
    // supervisor-executable while everything else stays write-once.
    {
      Scenario s;
      s.name = "jit-region";
      s.boot.jitBytes = kPageSize;
      s.steps = {
        ExploitStep::physWrite(AddrExpr::pa("jit_region"),
                               {0x0e, 0x00, 0x00, 0x00}),   // halt
        ExploitStep::jumpSupervisor(AddrExpr::va("jit_region")),
        ExploitStep::physWrite(AddrExpr::pa("kernel_text"),
                               {0x0e, 0x00, 0x00, 0x00, 0x0e, 0x00, 0x00, 0x00}),
      };
      s.expectations = {
        Expectation::verdictIs(AccessVerdict::allow(), 0),
        Expectation::runsToHalt(1),
        Expectation::verdictIs(AccessVerdict::deny(DenyCause::WriteProtected), 2),
      };
      suite.push_back(std::move(s));
    }

    return suite;
  }

  /// Run the whole standard suite; reports come back sorted by scenario name
  /// for deterministic output.
  inline std::vector<ScenarioReport> runStandardSuite(const RunOptions& opts = {})
  {
    std::vector<ScenarioReport> reports;
    for (const Scenario& s : standardSuite())
      reports.push_back(runScenario(s, opts));
    std::sort(reports.begin(), reports.end(),
              [](const ScenarioReport& a, const ScenarioReport& b) {
                return a.scenario < b.scenario;
              });
    return reports;
  }

}

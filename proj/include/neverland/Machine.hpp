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

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "Isa.hpp"
#include "PermTable.hpp"

namespace neverland
{

  enum class PrivMode : uint8_t { User, Supervisor };

  /// Architectural trap causes as written to scause. Table faults are kept
  /// distinct from page faults so a denial can be attributed to the
  /// permission table rather than to paging.
  enum class TrapCause : uint64_t
    {
     Syscall = 0,
     PageFaultFetch = 1,
     PageFaultLoad = 2,
     PageFaultStore = 3,
     TableFaultFetch = 4,
     TableFaultLoad = 5,
     TableFaultStore = 6,
     IllegalInstruction = 7
    };

  constexpr const char* toString(TrapCause c)
  {
    switch (c)
      {
      case TrapCause::Syscall:            return "syscall";
      case TrapCause::PageFaultFetch:     return "page_fault_fetch";
      case TrapCause::PageFaultLoad:      return "page_fault_load";
      case TrapCause::PageFaultStore:     return "page_fault_store";
      case TrapCause::TableFaultFetch:    return "table_fault_fetch";
      case TrapCause::TableFaultLoad:     return "table_fault_load";
      case TrapCause::TableFaultStore:    return "table_fault_store";
      case TrapCause::IllegalInstruction: return "illegal_instruction";
      }
    return "?";
  }

  constexpr uint64_t kPageSize = 4096;
  constexpr unsigned kPageShift = 12;

  /// One page-map record: OS-maintained translation and page permissions.
  struct PageEntry
  {
    uint64_t pfn = 0;
    bool readable = false;
    bool writable = false;
    bool executable = false;
    bool userAccessible = false;

    bool operator==(const PageEntry&) const = default;
  };

  /// Flat map vpn -> PageEntry standing in for the OS page tables.
  class PageMap
  {
  public:

    void set(uint64_t vpn, const PageEntry& entry)
    { map_[vpn] = entry; }

    void erase(uint64_t vpn)
    { map_.erase(vpn); }

    std::optional<PageEntry> find(uint64_t vpn) const
    {
      auto it = map_.find(vpn);
      if (it == map_.end())
        return std::nullopt;
      return it->second;
    }

    void clear()
    { map_.clear(); }

    size_t size() const
    { return map_.size(); }

    const std::unordered_map<uint64_t, PageEntry>& entries() const
    { return map_; }

  private:
    std::unordered_map<uint64_t, PageEntry> map_;
  };

  /// Direct-mapped 16-slot translation cache. A hit returns the record
  /// cached at fill time even if the page map has changed since: staleness
  /// is intentional and stays observable until flush().
  class Tlb
  {
  public:

    static constexpr unsigned kSlots = 16;

    std::optional<PageEntry> find(uint64_t vpn) const
    {
      const Slot& s = slots_[vpn % kSlots];
      if (s.valid and s.vpn == vpn)
        return s.entry;
      return std::nullopt;
    }

    void fill(uint64_t vpn, const PageEntry& entry)
    {
      Slot& s = slots_[vpn % kSlots];
      s.valid = true;
      s.vpn = vpn;
      s.entry = entry;
    }

    void flush()
    {
      for (auto& s : slots_)
        s.valid = false;
    }

  private:

    struct Slot
    {
      bool valid = false;
      uint64_t vpn = 0;
      PageEntry entry;
    };

    std::array<Slot, kSlots> slots_;
  };

  /// The supervisor CSR file with lockable trap vector. Once lockctl bit0 is
  /// set, stvec writes are discarded and the lock bit itself can only be
  /// cleared by machine reset. The sum override is never lockable: the
  /// kernel has to toggle it at runtime to touch user buffers.
  class CsrFile
  {
  public:

    std::optional<uint64_t> read(uint16_t number) const
    {
      switch (number)
        {
        case csr::kStvec:   return stvec_;
        case csr::kSepc:    return sepc_;
        case csr::kScause:  return scause_;
        case csr::kSum:     return sum_ ? 1 : 0;
        case csr::kLockctl: return lockctl_;
        }
      return std::nullopt;
    }

    /// Returns false for an unknown CSR. A write masked off by a lock still
    /// returns true: the hardware discards it silently.
    bool write(uint16_t number, uint64_t value)
    {
      switch (number)
        {
        case csr::kStvec:
          if (not stvecLocked())
            stvec_ = value;
          return true;
        case csr::kSepc:
          sepc_ = value;
          return true;
        case csr::kScause:
          scause_ = value;
          return true;
        case csr::kSum:
          sum_ = value & 1;
          return true;
        case csr::kLockctl:
          lockctl_ |= value & 1;   // lock bits accumulate; never cleared by software
          return true;
        }
      return false;
    }

    uint64_t stvec() const   { return stvec_; }
    uint64_t sepc() const    { return sepc_; }
    uint64_t scause() const  { return scause_; }
    bool sum() const         { return sum_; }
    uint64_t lockctl() const { return lockctl_; }
    bool stvecLocked() const { return lockctl_ & 1; }

    void setSepc(uint64_t v)   { sepc_ = v; }
    void setScause(uint64_t v) { scause_ = v; }

    void reset()
    {
      stvec_ = sepc_ = scause_ = lockctl_ = 0;
      sum_ = false;
    }

  private:
    uint64_t stvec_ = 0;
    uint64_t sepc_ = 0;
    uint64_t scause_ = 0;
    uint64_t lockctl_ = 0;
    bool sum_ = false;
  };

  /// Result of one step of the interpreter. A trap taken while already in
  /// supervisor mode is a double fault and halts the machine; the underlying
  /// cause is still reported (and logged) so a harness can attribute it.
  struct StepOutcome
  {
    enum class Kind : uint8_t { Continue, Halted, Trapped, DoubleFault };

    Kind kind = Kind::Continue;
    TrapCause cause = TrapCause::Syscall;   // valid for Trapped / DoubleFault

    bool operator==(const StepOutcome&) const = default;
  };

  struct RunResult
  {
    enum class Kind : uint8_t { Halted, DoubleFault, StepLimit };

    Kind kind = Kind::StepLimit;
    uint64_t steps = 0;
  };

  enum class PhysStatus : uint8_t { Ok, Denied, Unmapped };

  /// Outcome of a host-side physical access. On Denied, verdict() carries
  /// the table's refusal.
  struct PhysResult
  {
    PhysStatus status = PhysStatus::Ok;
    AccessVerdict verdict = AccessVerdict::allow();

    bool ok() const { return status == PhysStatus::Ok; }
  };

  struct MachineConfig
  {
    uint64_t ramBase = 0x8000'0000;
    uint64_t ramSize = 16 * 1024 * 1024;
    uint64_t lowSize = 64 * 1024;            // peripheral scratch at physical 0
    uint64_t tableBase = 0xf000'0000;        // permission-table MMIO window
    unsigned tableCapacity = 8;
  };

  /// The simulated single-core 64-bit machine. Every instruction fetch and
  /// every load/store is translated through the page map (TLB in front) and
  /// then checked against the permission table at the physical level; the
  /// table sees physical addresses only, so page-permission games never
  /// influence its verdicts. The table's MMIO window is exempt from table
  /// checks and reachable only in supervisor mode.
  class Machine
  {
  public:

    explicit Machine(const MachineConfig& config = MachineConfig())
      : config_(config), table_(config.tableCapacity),
        lowMem_(config.lowSize, 0), ram_(config.ramSize, 0)
    {
      if (config.tableBase % 8 != 0)
        throw std::invalid_argument("Machine: table base must be 8-byte aligned");
      if (overlaps(config.tableBase, PermissionTable::kWindowSize, 0, config.lowSize)
          or overlaps(config.tableBase, PermissionTable::kWindowSize,
                      config.ramBase, config.ramSize))
        throw std::invalid_argument("Machine: MMIO window overlaps memory");
    }

    const MachineConfig& config() const
    { return config_; }

    // ----- Registers and mode -----

    uint64_t reg(unsigned ix) const
    { return ix == 0 ? 0 : gpr_.at(ix); }

    void setReg(unsigned ix, uint64_t value)
    {
      if (ix != 0)
        gpr_.at(ix) = value;
    }

    uint64_t pc() const        { return pc_; }
    void setPc(uint64_t pc)    { pc_ = pc; }
    PrivMode mode() const      { return mode_; }
    void setMode(PrivMode m)   { mode_ = m; }
    bool halted() const        { return halted_; }
    void resume()              { halted_ = false; }

    CsrFile& csrs()             { return csrs_; }
    const CsrFile& csrs() const { return csrs_; }

    PermissionTable& table()             { return table_; }
    const PermissionTable& table() const { return table_; }

    // ----- Counters -----

    uint64_t cycleCount() const  { return cycleCount_; }
    uint64_t lookupCount() const { return lookupCount_; }

    uint64_t denialCount(DenyCause cause) const
    { return denialCounts_[unsigned(cause)]; }

    uint64_t totalDenials() const
    {
      uint64_t n = 0;
      for (auto c : denialCounts_)
        n += c;
      return n;
    }

    const std::vector<TrapCause>& trapLog() const
    { return trapLog_; }

    void clearTrapLog()
    { trapLog_.clear(); }

    // ----- Page map management (OS-side software state) -----

    /// Install a translation. The backing frame must lie inside simulated
    /// memory (or cover the MMIO window); the page map never points at
    /// nothing.
    void mapPage(uint64_t vpn, const PageEntry& entry)
    {
      if (not frameValid(entry.pfn))
        throw std::invalid_argument("mapPage: frame outside physical memory");
      pageMap_.set(vpn, entry);
    }

    /// Point an existing translation at a new frame, keeping permissions.
    /// Does not flush the TLB: callers decide when the hardware may see it.
    void remapPage(uint64_t vpn, uint64_t newPfn)
    {
      auto entry = pageMap_.find(vpn);
      if (not entry)
        throw std::invalid_argument("remapPage: vpn not mapped");
      if (not frameValid(newPfn))
        throw std::invalid_argument("remapPage: frame outside physical memory");
      entry->pfn = newPfn;
      pageMap_.set(vpn, *entry);
    }

    void unmapPage(uint64_t vpn)
    { pageMap_.erase(vpn); }

    std::optional<PageEntry> findPage(uint64_t vpn) const
    { return pageMap_.find(vpn); }

    const PageMap& pageMap() const
    { return pageMap_; }

    void flushTlb()
    { tlb_.flush(); }

    // ----- Translation -----

    struct TranslateResult
    {
      bool ok = false;
      uint64_t paddr = 0;
      TrapCause fault = TrapCause::PageFaultLoad;
    };

    /// Translate a virtual address for the given access kind under the
    /// machine's current mode. Consults the TLB first; a miss walks the page
    /// map and fills the TLB, so later lookups keep seeing the filled record
    /// until a flush. Page permissions are enforced here, before any
    /// permission-table involvement.
    TranslateResult translate(uint64_t vaddr, AccessKind kind)
    {
      uint64_t vpn = vaddr >> kPageShift;

      std::optional<PageEntry> rec = tlb_.find(vpn);
      if (not rec)
        {
          rec = pageMap_.find(vpn);
          if (not rec)
            return {false, 0, pageFaultFor(kind)};
          tlb_.fill(vpn, *rec);
        }

      if (mode_ == PrivMode::User and not rec->userAccessible)
        return {false, 0, pageFaultFor(kind)};
      if (kind == AccessKind::Fetch and not rec->executable)
        return {false, 0, pageFaultFor(kind)};
      if (kind == AccessKind::Load and not rec->readable)
        return {false, 0, pageFaultFor(kind)};
      if (kind == AccessKind::Store and not rec->writable)
        return {false, 0, pageFaultFor(kind)};

      return {true, (rec->pfn << kPageShift) | (vaddr & (kPageSize - 1)), {}};
    }

    // ----- Physical access (also the exploit-primitive path) -----

    bool inMmioWindow(uint64_t paddr) const
    {
      return paddr >= config_.tableBase
        and paddr < config_.tableBase + PermissionTable::kWindowSize;
    }

    /// Check an access of len bytes against the permission table, byte by
    /// byte, so an access straddling a region boundary is refused if any of
    /// its bytes is. First refused byte decides the cause.
    AccessVerdict checkPhysRange(uint64_t paddr, uint64_t len, AccessKind kind,
                                 PrivMode mode, bool sum) const
    {
      bool priv = mode == PrivMode::Supervisor;
      for (uint64_t a = paddr; a < paddr + len; ++a)
        {
          AccessVerdict v = table_.checkAccess(a, kind, priv, sum);
          if (v.denied())
            return v;
        }
      return AccessVerdict::allow();
    }

    /// Read physical memory as the given mode would: the access passes
    /// through the permission table (never through the page map). An access
    /// falling in the MMIO window is routed to the table's register file and
    /// is legal only in supervisor mode, 8 bytes at a time, aligned.
    PhysResult physRead(uint64_t paddr, std::span<uint8_t> out,
                        PrivMode mode, bool sum)
    {
      if (inMmioWindow(paddr))
        {
          auto denied = mmioGuard(paddr, out.size(), mode);
          if (denied)
            return *denied;
          uint64_t word = table_.mmioRead(paddr - config_.tableBase);
          std::memcpy(out.data(), &word, 8);
          return {};
        }

      AccessVerdict v = checkPhysRange(paddr, out.size(), AccessKind::Load, mode, sum);
      if (v.denied())
        return denyResult(v);

      uint8_t* p = backing(paddr, out.size());
      if (not p)
        return {PhysStatus::Unmapped, AccessVerdict::allow()};
      std::memcpy(out.data(), p, out.size());
      return {};
    }

    /// Write physical memory as the given mode would. Same routing rules as
    /// physRead. A denied or unmapped write changes nothing.
    PhysResult physWrite(uint64_t paddr, std::span<const uint8_t> data,
                         PrivMode mode, bool sum)
    {
      if (inMmioWindow(paddr))
        {
          auto denied = mmioGuard(paddr, data.size(), mode);
          if (denied)
            return *denied;
          uint64_t word = 0;
          std::memcpy(&word, data.data(), 8);
          table_.mmioWrite(paddr - config_.tableBase, word);
          return {};
        }

      AccessVerdict v = checkPhysRange(paddr, data.size(), AccessKind::Store, mode, sum);
      if (v.denied())
        return denyResult(v);

      uint8_t* p = backing(paddr, data.size());
      if (not p)
        return {PhysStatus::Unmapped, AccessVerdict::allow()};
      std::memcpy(p, data.data(), data.size());
      return {};
    }

    uint64_t physReadWord(uint64_t paddr, PrivMode mode, bool sum,
                          PhysResult* result = nullptr)
    {
      std::array<uint8_t, 8> buf{};
      PhysResult r = physRead(paddr, buf, mode, sum);
      if (result)
        *result = r;
      uint64_t v = 0;
      std::memcpy(&v, buf.data(), 8);
      return r.ok() ? v : 0;
    }

    // ----- Debug access (host tooling; no checks, no MMIO) -----

    void debugWrite(uint64_t paddr, std::span<const uint8_t> data)
    {
      uint8_t* p = backing(paddr, data.size());
      if (not p)
        throw std::out_of_range("debugWrite: address not backed by memory");
      std::memcpy(p, data.data(), data.size());
    }

    void debugRead(uint64_t paddr, std::span<uint8_t> out) const
    {
      const uint8_t* p = const_cast<Machine*>(this)->backing(paddr, out.size());
      if (not p)
        throw std::out_of_range("debugRead: address not backed by memory");
      std::memcpy(out.data(), p, out.size());
    }

    std::vector<uint8_t> debugReadBytes(uint64_t paddr, size_t n) const
    {
      std::vector<uint8_t> v(n);
      debugRead(paddr, v);
      return v;
    }

    // ----- CSR host access (trusted boot code / exploit primitives) -----

    /// Supervisor-context CSR write from outside the interpreter. Register
    /// locks apply exactly as they do for csrw. Returns false for an
    /// unknown CSR number.
    bool csrWrite(uint16_t number, uint64_t value)
    { return csrs_.write(number, value); }

    std::optional<uint64_t> csrRead(uint16_t number) const
    { return csrs_.read(number); }

    // ----- Execution -----

    /// Execute one instruction. Fetch and data accesses translate first
    /// (page faults win over table faults by construction) and then consult
    /// the permission table; any refusal raises the corresponding table
    /// fault. ecall from user mode enters the trap vector in supervisor
    /// mode; sret returns. A trap out of supervisor mode double-faults and
    /// halts.
    StepOutcome step()
    {
      if (halted_)
        return {StepOutcome::Kind::Halted, {}};

      ++cycleCount_;

      // Fetch.
      TranslateResult tr = translate(pc_, AccessKind::Fetch);
      if (not tr.ok)
        return takeTrap(tr.fault);
      if (inMmioWindow(tr.paddr))
        return takeTrap(TrapCause::IllegalInstruction);   // device space holds no code
      ++lookupCount_;
      AccessVerdict fv = checkPhysRange(tr.paddr, 4, AccessKind::Fetch, mode_, false);
      if (fv.denied())
        {
          noteDenial(fv);
          return takeTrap(TrapCause::TableFaultFetch);
        }

      uint8_t* ip = backing(tr.paddr, 4);
      if (not ip)
        return takeTrap(TrapCause::IllegalInstruction);
      uint32_t word = 0;
      std::memcpy(&word, ip, 4);

      Instruction inst = decode(word);
      if (not inst.valid)
        return takeTrap(TrapCause::IllegalInstruction);

      return execute(inst);
    }

    /// Step until halt, double fault or the step limit.
    RunResult run(uint64_t maxSteps)
    {
      for (uint64_t i = 0; i < maxSteps; ++i)
        {
          StepOutcome out = step();
          if (out.kind == StepOutcome::Kind::Halted)
            return {RunResult::Kind::Halted, i + 1};
          if (out.kind == StepOutcome::Kind::DoubleFault)
            return {RunResult::Kind::DoubleFault, i + 1};
        }
      return {RunResult::Kind::StepLimit, maxSteps};
    }

    /// Machine reset. Registers, counters, CSR locks, TLB, page map and the
    /// permission table all return to power-on state; RAM contents survive a
    /// warm reset and are zeroed on a cold one.
    void reset(bool cold = false)
    {
      gpr_.fill(0);
      pc_ = 0;
      mode_ = PrivMode::Supervisor;
      halted_ = false;
      csrs_.reset();
      table_.reset();
      tlb_.flush();
      pageMap_.clear();
      cycleCount_ = lookupCount_ = 0;
      denialCounts_.fill(0);
      trapLog_.clear();
      if (cold)
        {
          std::fill(lowMem_.begin(), lowMem_.end(), 0);
          std::fill(ram_.begin(), ram_.end(), 0);
        }
    }

  private:

    static bool overlaps(uint64_t aBase, uint64_t aLen, uint64_t bBase, uint64_t bLen)
    { return aBase < bBase + bLen and bBase < aBase + aLen; }

    static TrapCause pageFaultFor(AccessKind kind)
    {
      switch (kind)
        {
        case AccessKind::Fetch: return TrapCause::PageFaultFetch;
        case AccessKind::Load:  return TrapCause::PageFaultLoad;
        case AccessKind::Store: return TrapCause::PageFaultStore;
        }
      return TrapCause::PageFaultLoad;
    }

    static TrapCause tableFaultFor(AccessKind kind)
    {
      switch (kind)
        {
        case AccessKind::Fetch: return TrapCause::TableFaultFetch;
        case AccessKind::Load:  return TrapCause::TableFaultLoad;
        case AccessKind::Store: return TrapCause::TableFaultStore;
        }
      return TrapCause::TableFaultLoad;
    }

    static PhysResult denyResult(AccessVerdict v)
    { return {PhysStatus::Denied, v}; }

    bool frameBacked(uint64_t pfn) const
    { return backingConst(pfn << kPageShift, kPageSize) != nullptr; }

    /// A page-map frame may also cover the table's MMIO window (device
    /// mapping).
    bool frameValid(uint64_t pfn) const
    {
      return frameBacked(pfn)
        or overlaps(pfn << kPageShift, kPageSize,
                    config_.tableBase, PermissionTable::kWindowSize);
    }

    /// Pointer into simulated memory when [paddr, paddr+len) sits entirely
    /// inside the low region or entirely inside RAM; null otherwise.
    uint8_t* backing(uint64_t paddr, uint64_t len)
    { return const_cast<uint8_t*>(backingConst(paddr, len)); }

    const uint8_t* backingConst(uint64_t paddr, uint64_t len) const
    {
      if (paddr + len <= config_.lowSize)
        return lowMem_.data() + paddr;
      if (paddr >= config_.ramBase and paddr + len <= config_.ramBase + config_.ramSize)
        return ram_.data() + (paddr - config_.ramBase);
      return nullptr;
    }

    /// Common gating for MMIO-window data accesses: supervisor only, whole
    /// aligned 64-bit words inside the window.
    std::optional<PhysResult> mmioGuard(uint64_t paddr, size_t len, PrivMode mode)
    {
      if (mode != PrivMode::Supervisor)
        {
          AccessVerdict v = AccessVerdict::deny(DenyCause::UserAccessToPrivDenied);
          noteDenial(v);
          return denyResult(v);
        }
      if (len != 8 or paddr % 8 != 0
          or paddr + 8 > config_.tableBase + PermissionTable::kWindowSize)
        throw std::invalid_argument("MMIO access must be one aligned 64-bit word");
      return std::nullopt;
    }

    void noteDenial(AccessVerdict v)
    {
      if (v.denied())
        ++denialCounts_[unsigned(v.cause())];
    }

    StepOutcome takeTrap(TrapCause cause)
    {
      trapLog_.push_back(cause);
      if (mode_ == PrivMode::Supervisor)
        {
          halted_ = true;
          return {StepOutcome::Kind::DoubleFault, cause};
        }
      csrs_.setSepc(pc_);
      csrs_.setScause(uint64_t(cause));
      mode_ = PrivMode::Supervisor;
      pc_ = csrs_.stvec();
      return {StepOutcome::Kind::Trapped, cause};
    }

    /// Translate + table-check + touch memory for one data access of the
    /// interpreter. On success fills value (loads) or writes it (stores).
    struct DataAccess
    {
      bool ok = false;
      TrapCause fault = TrapCause::PageFaultLoad;
      uint64_t value = 0;
    };

    DataAccess dataAccess(uint64_t vaddr, AccessKind kind, uint64_t storeValue)
    {
      if (vaddr % 8 != 0)
        return {false, TrapCause::IllegalInstruction, 0};

      TranslateResult tr = translate(vaddr, kind);
      if (not tr.ok)
        return {false, tr.fault, 0};

      if (inMmioWindow(tr.paddr))
        {
          if (mode_ != PrivMode::Supervisor)
            {
              noteDenial(AccessVerdict::deny(DenyCause::UserAccessToPrivDenied));
              return {false, tableFaultFor(kind), 0};
            }
          uint64_t offset = tr.paddr - config_.tableBase;
          if (kind == AccessKind::Store)
            table_.mmioWrite(offset, storeValue);
          return {true, {}, kind == AccessKind::Store ? 0 : table_.mmioRead(offset)};
        }

      ++lookupCount_;
      AccessVerdict v = checkPhysRange(tr.paddr, 8, kind, mode_, csrs_.sum());
      if (v.denied())
        {
          noteDenial(v);
          return {false, tableFaultFor(kind), 0};
        }

      uint8_t* p = backing(tr.paddr, 8);
      if (not p)
        return {false, TrapCause::IllegalInstruction, 0};

      uint64_t value = 0;
      if (kind == AccessKind::Store)
        std::memcpy(p, &storeValue, 8);
      else
        std::memcpy(&value, p, 8);
      return {true, {}, value};
    }

    StepOutcome execute(const Instruction& inst)
    {
      uint64_t next = pc_ + 4;

      switch (inst.op)
        {
        case Opcode::Li:
          setReg(inst.ra, uint64_t(uint32_t(inst.imm) & 0xffff) << (16 * inst.sh));
          break;

        case Opcode::Add:
          setReg(inst.ra, reg(inst.rb) + reg(inst.rc));
          break;

        case Opcode::Addi:
          setReg(inst.ra, reg(inst.rb) + uint64_t(int64_t(inst.imm)));
          break;

        case Opcode::Lw:
          {
            DataAccess a = dataAccess(reg(inst.rb) + uint64_t(int64_t(inst.imm)),
                                      AccessKind::Load, 0);
            if (not a.ok)
              return takeTrap(a.fault);
            setReg(inst.ra, a.value);
            break;
          }

        case Opcode::Sw:
          {
            DataAccess a = dataAccess(reg(inst.rb) + uint64_t(int64_t(inst.imm)),
                                      AccessKind::Store, reg(inst.ra));
            if (not a.ok)
              return takeTrap(a.fault);
            break;
          }

        case Opcode::Beq:
          if (reg(inst.ra) == reg(inst.rb))
            next = pc_ + uint64_t(int64_t(inst.imm)) * 4;
          break;

        case Opcode::Bne:
          if (reg(inst.ra) != reg(inst.rb))
            next = pc_ + uint64_t(int64_t(inst.imm)) * 4;
          break;

        case Opcode::Jal:
          setReg(inst.ra, pc_ + 4);
          next = pc_ + uint64_t(int64_t(inst.imm)) * 4;
          break;

        case Opcode::Jalr:
          {
            uint64_t target = (reg(inst.rb) + uint64_t(int64_t(inst.imm))) & ~uint64_t(3);
            setReg(inst.ra, pc_ + 4);
            next = target;
            break;
          }

        case Opcode::Ecall:
          return takeTrap(TrapCause::Syscall);

        case Opcode::Sret:
          if (mode_ != PrivMode::Supervisor)
            return takeTrap(TrapCause::IllegalInstruction);
          mode_ = PrivMode::User;
          pc_ = csrs_.sepc();
          return {StepOutcome::Kind::Continue, {}};

        case Opcode::Csrr:
          {
            if (mode_ != PrivMode::Supervisor)
              return takeTrap(TrapCause::IllegalInstruction);
            auto v = csrs_.read(uint16_t(inst.imm));
            if (not v)
              return takeTrap(TrapCause::IllegalInstruction);
            setReg(inst.ra, *v);
            break;
          }

        case Opcode::Csrw:
          if (mode_ != PrivMode::Supervisor)
            return takeTrap(TrapCause::IllegalInstruction);
          if (not csrs_.write(uint16_t(inst.imm), reg(inst.rb)))
            return takeTrap(TrapCause::IllegalInstruction);
          break;

        case Opcode::Halt:
          halted_ = true;
          return {StepOutcome::Kind::Halted, {}};

        default:
          return takeTrap(TrapCause::IllegalInstruction);
        }

      pc_ = next;
      return {StepOutcome::Kind::Continue, {}};
    }

    MachineConfig config_;
    std::array<uint64_t, 16> gpr_{};
    uint64_t pc_ = 0;
    PrivMode mode_ = PrivMode::Supervisor;
    bool halted_ = false;
    CsrFile csrs_;
    PageMap pageMap_;
    Tlb tlb_;
    PermissionTable table_;
    std::vector<uint8_t> lowMem_;
    std::vector<uint8_t> ram_;
    uint64_t cycleCount_ = 0;
    uint64_t lookupCount_ = 0;
    std::array<uint64_t, 5> denialCounts_{};
    std::vector<TrapCause> trapLog_;
  };

}

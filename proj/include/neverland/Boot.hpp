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

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "Assembler.hpp"
#include "Machine.hpp"

namespace neverland
{

  // Default virtual layout used by the boot loader.
  constexpr uint64_t kKernelVbase = 0xc000'0000;
  constexpr uint64_t kModuleVbase = 0xd000'0000;
  constexpr uint64_t kModuleSlotBytes = 0x10'0000;   // per-module VA window
  constexpr uint64_t kJitVbase = 0xe000'0000;
  constexpr uint64_t kUserVbase = 0x0040'0000;

  constexpr uint64_t pageCount(uint64_t bytes)
  { return (bytes + kPageSize - 1) / kPageSize; }

  constexpr uint64_t padToPage(uint64_t bytes)
  { return pageCount(bytes) * kPageSize; }

  /// Boot-time failure. The kind string doubles as the CLI diagnostic.
  class BootError : public std::runtime_error
  {
  public:
    enum class Kind { TableBudgetExceeded, PoolTooSmall, MachineNotReset, BadImage };

    BootError(Kind kind, const std::string& detail)
      : std::runtime_error(kindName(kind) + (": " + detail)), kind_(kind)
    { }

    Kind kind() const { return kind_; }

    static std::string kindName(Kind k)
    {
      switch (k)
        {
        case Kind::TableBudgetExceeded: return "TableBudgetExceeded";
        case Kind::PoolTooSmall:        return "PoolTooSmall";
        case Kind::MachineNotReset:     return "MachineNotReset";
        case Kind::BadImage:            return "BadImage";
        }
      return "BootError";
    }

  private:
    Kind kind_;
  };

  /// Bookkeeping for physical page frames. A frame is either free (in the
  /// set) or handed out; freeing a frame that is already free, or one the
  /// allocator never owned, is a hard error since it indicates a step
  /// ordering bug in the caller.
  class FrameAllocator
  {
  public:

    FrameAllocator(uint64_t firstPfn, uint64_t frameCount)
      : firstPfn_(firstPfn), endPfn_(firstPfn + frameCount)
    {
      for (uint64_t p = firstPfn; p < endPfn_; ++p)
        free_.insert(p);
    }

    uint64_t allocate()
    {
      if (free_.empty())
        throw std::runtime_error("FrameAllocator: out of frames");
      uint64_t pfn = *free_.begin();
      free_.erase(free_.begin());
      ++allocated_;
      return pfn;
    }

    /// Allocate a specific frame (deliberate placement).
    void take(uint64_t pfn)
    {
      auto it = free_.find(pfn);
      if (it == free_.end())
        throw std::runtime_error("FrameAllocator: frame not free");
      free_.erase(it);
      ++allocated_;
    }

    /// Lowest run of n physically consecutive free frames.
    uint64_t allocateRun(uint64_t n)
    {
      uint64_t runStart = 0, runLen = 0, prev = 0;
      for (uint64_t pfn : free_)
        {
          if (runLen == 0 or pfn != prev + 1)
            {
              runStart = pfn;
              runLen = 1;
            }
          else
            ++runLen;
          prev = pfn;
          if (runLen == n)
            {
              for (uint64_t p = runStart; p < runStart + n; ++p)
                free_.erase(p);
              allocated_ += n;
              return runStart;
            }
        }
      throw std::runtime_error("FrameAllocator: no contiguous run of "
                               + std::to_string(n) + " frames");
    }

    void release(uint64_t pfn)
    {
      if (pfn < firstPfn_ or pfn >= endPfn_)
        throw std::logic_error("FrameAllocator: freeing frame outside pool");
      if (not free_.insert(pfn).second)
        throw std::logic_error("FrameAllocator: double free of frame "
                               + std::to_string(pfn));
      ++freed_;
    }

    bool isFree(uint64_t pfn) const
    { return free_.count(pfn) != 0; }

    size_t freeCount() const
    { return free_.size(); }

    uint64_t lowestFree() const
    {
      if (free_.empty())
        throw std::runtime_error("FrameAllocator: no free frames");
      return *free_.begin();
    }

    uint64_t allocatedCount() const { return allocated_; }
    uint64_t freedCount() const     { return freed_; }

  private:
    uint64_t firstPfn_;
    uint64_t endPfn_;
    std::set<uint64_t> free_;
    uint64_t allocated_ = 0;
    uint64_t freed_ = 0;
  };

  /// A simulated kernel image: segment bytes plus their virtual bases. A
  /// vbase of zero asks the loader to lay the segment out sequentially from
  /// kKernelVbase.
  struct KernelImage
  {
    std::vector<uint8_t> text;
    std::vector<uint8_t> rodata;
    std::vector<uint8_t> data;
    std::vector<uint8_t> configFlags;
    std::vector<uint64_t> syscallTable;   // handler virtual addresses, inside text

    uint64_t textVbase = 0;
    uint64_t rodataVbase = 0;
    uint64_t syscallVbase = 0;
    uint64_t configVbase = 0;
    uint64_t dataVbase = 0;

    uint64_t entryPoint = 0;
    uint64_t trapVector = 0;

    std::map<std::string, uint64_t> symbols;   // labels of the kernel program
  };

  /// A loadable module: text is mandatory, data optional. requestedFrames,
  /// when non-empty, pins each text page to a specific physical frame (used
  /// to model arbitrary fragmentation); otherwise the loader interleaves
  /// frames across modules.
  struct ModuleBlob
  {
    std::string name;
    std::vector<uint8_t> text;
    std::vector<uint8_t> data;
    std::vector<uint64_t> requestedFrames;
  };

  struct BootConfig
  {
    uint64_t poolBytes = 64 * 1024;   // contiguous region for packed module text
    uint64_t jitBytes = 0;            // pre-allocated privileged RWX region, 0 = none
    bool defragEnabled = true;

    uint64_t userEntry = kUserVbase;
    std::vector<uint8_t> userProgram; // installed at userEntry before lockdown

    // Hardening toggles. All default on; switching one off deliberately
    // weakens the lockdown so sensitivity tests can prove the harness
    // notices.
    bool armEnforce = true;
    bool lockStvec = true;
    bool sealUnused = true;
  };

  struct BootStats
  {
    uint64_t permissionWrites = 0;   // MMIO words written to the table
    uint64_t pagesCopied = 0;
    uint64_t pteRewrites = 0;
    uint64_t tlbFlushes = 0;
    uint64_t framesFreed = 0;
    uint64_t entriesUsed = 0;

    bool operator==(const BootStats&) const = default;
  };

  struct DefragStats
  {
    uint64_t pagesCopied = 0;
    uint64_t pteRewrites = 0;
    uint64_t tlbFlushes = 0;
    uint64_t framesFreed = 0;        // old scattered frames returned
    uint64_t poolTailFreed = 0;      // unused pool frames returned

    bool operator==(const DefragStats&) const = default;
  };

  struct Region
  {
    uint64_t pa = 0;
    uint64_t va = 0;
    uint64_t bytes = 0;

    uint64_t paEnd() const { return pa + bytes; }
  };

  /// Where the loader put everything, plus a symbol table for scripted
  /// scenarios. Physical symbols carry region bases; virtual symbols also
  /// include every program label.
  struct BootLayout
  {
    Region kernelText, rodata, syscallTable, configFlags, kernelData;
    Region modulePool;               // packed module text (defrag builds it)
    Region jitRegion;
    Region userRegion;
    std::vector<Region> moduleText;  // one per module, post-defrag placement

    uint64_t userEntry = 0;
    uint64_t freeFramePa = 0;        // lowest frame still free after boot

    std::map<std::string, uint64_t> paSymbols;
    std::map<std::string, uint64_t> vaSymbols;
  };

  struct BootResult
  {
    BootStats stats;
    BootLayout layout;
  };

  /// Placement record for one loaded module's text, consumed by defragment.
  struct ModulePlacement
  {
    std::string name;
    uint64_t textVa = 0;
    uint64_t pages = 0;
    std::vector<uint64_t> frames;    // current physical frame per text page
  };

  struct PoolRegion
  {
    uint64_t basePfn = 0;
    uint64_t frames = 0;
  };

  /// Map and copy one module's text at the given frames, page by page in
  /// virtual order. Text pages are privileged read-only executable.
  inline ModulePlacement placeModuleText(Machine& m, const ModuleBlob& blob,
                                         uint64_t textVa,
                                         const std::vector<uint64_t>& frames)
  {
    if (blob.text.empty())
      throw BootError(BootError::Kind::BadImage,
                      "module '" + blob.name + "' has empty text");

    ModulePlacement placed;
    placed.name = blob.name;
    placed.textVa = textVa;
    placed.pages = pageCount(blob.text.size());
    placed.frames = frames;

    if (frames.size() != placed.pages)
      throw BootError(BootError::Kind::BadImage,
                      "module '" + blob.name + "': frame list does not cover text");

    for (uint64_t p = 0; p < placed.pages; ++p)
      {
        m.mapPage((textVa >> kPageShift) + p,
                  PageEntry{frames[p], true, false, true, false});

        std::vector<uint8_t> page(kPageSize, 0);
        size_t off = p * kPageSize;
        size_t n = std::min(kPageSize, uint64_t(blob.text.size() - off));
        std::copy(blob.text.begin() + off, blob.text.begin() + off + n, page.begin());
        m.debugWrite(frames[p] << kPageShift, page);
      }
    return placed;
  }

  /// Decide physical frames for every module's text. Pinned frame lists are
  /// honored; everything else is interleaved round-robin across modules so
  /// that each module ends up physically non-contiguous, the layout the
  /// defragmenter exists to clean up.
  inline std::vector<std::vector<uint64_t>>
  scatterModuleFrames(const std::vector<ModuleBlob>& modules, FrameAllocator& alloc)
  {
    std::vector<std::vector<uint64_t>> frames(modules.size());
    uint64_t maxPages = 0;
    for (const auto& blob : modules)
      maxPages = std::max(maxPages, pageCount(blob.text.size()));

    for (size_t i = 0; i < modules.size(); ++i)
      if (not modules[i].requestedFrames.empty())
        {
          frames[i] = modules[i].requestedFrames;
          for (uint64_t pfn : frames[i])
            alloc.take(pfn);
        }

    for (uint64_t page = 0; page < maxPages; ++page)
      for (size_t i = 0; i < modules.size(); ++i)
        if (modules[i].requestedFrames.empty()
            and page < pageCount(modules[i].text.size()))
          frames[i].push_back(alloc.allocate());

    return frames;
  }

  /// Pack loaded module text into the physically contiguous pool:
  /// per module, copy its text pages into the next pool frames, rewrite the
  /// page map so the same virtual pages point at the pool, flush the TLB,
  /// and return the old frames to the allocator. Afterwards the unused pool
  /// tail is freed too. Virtual addresses never change.
  ///
  /// flushTlbPerModule=false is a deliberately broken mode for negative
  /// tests: stale translations stay visible until something else flushes.
  inline DefragStats defragment(Machine& m, std::vector<ModulePlacement>& modules,
                                const PoolRegion& pool, FrameAllocator& alloc,
                                bool flushTlbPerModule = true)
  {
    uint64_t needed = 0;
    for (const auto& mod : modules)
      needed += mod.pages;
    if (needed > pool.frames)
      throw BootError(BootError::Kind::PoolTooSmall,
                      std::to_string(needed) + " pages needed, pool holds "
                      + std::to_string(pool.frames));

    DefragStats stats;
    uint64_t nextPool = pool.basePfn;

    for (auto& mod : modules)
      {
        std::vector<uint64_t> oldFrames = mod.frames;

        // Copy page contents into the pool.
        for (uint64_t p = 0; p < mod.pages; ++p)
          {
            auto bytes = m.debugReadBytes(mod.frames[p] << kPageShift, kPageSize);
            m.debugWrite((nextPool + p) << kPageShift, bytes);
            ++stats.pagesCopied;
          }

        // Point the PTEs at the new frames.
        for (uint64_t p = 0; p < mod.pages; ++p)
          {
            m.remapPage((mod.textVa >> kPageShift) + p, nextPool + p);
            mod.frames[p] = nextPool + p;
            ++stats.pteRewrites;
          }

        if (flushTlbPerModule)
          {
            m.flushTlb();
            ++stats.tlbFlushes;
          }

        for (uint64_t pfn : oldFrames)
          {
            alloc.release(pfn);
            ++stats.framesFreed;
          }

        nextPool += mod.pages;
      }

    for (uint64_t pfn = nextPool; pfn < pool.basePfn + pool.frames; ++pfn)
      {
        alloc.release(pfn);
        ++stats.poolTailFreed;
      }

    return stats;
  }

  namespace detail
  {
    /// Program one table entry through the MMIO window (the hardware path).
    inline void programEntry(Machine& m, unsigned ix, uint64_t start, uint64_t end,
                             uint64_t flags, BootStats& stats)
    {
      uint64_t base = m.config().tableBase + ix * PermissionTable::kEntryStride;
      auto writeWord = [&m, &stats](uint64_t paddr, uint64_t value) {
        std::array<uint8_t, 8> buf;
        std::memcpy(buf.data(), &value, 8);
        PhysResult r = m.physWrite(paddr, buf, PrivMode::Supervisor, false);
        if (not r.ok())
          throw std::logic_error("boot: table programming rejected");
        ++stats.permissionWrites;
      };
      writeWord(base + PermissionTable::kStartOffset, start);
      writeWord(base + PermissionTable::kEndOffset, end);
      writeWord(base + PermissionTable::kFlagsOffset, flags);
    }

    inline void writeEnforce(Machine& m, uint64_t value, BootStats& stats)
    {
      std::array<uint8_t, 8> buf;
      std::memcpy(buf.data(), &value, 8);
      PhysResult r = m.physWrite(m.config().tableBase + PermissionTable::kEnforceOffset,
                                 buf, PrivMode::Supervisor, false);
      if (not r.ok())
        throw std::logic_error("boot: enforce programming rejected");
      ++stats.permissionWrites;
    }

    /// Merge sorted frame numbers into maximal physically consecutive runs.
    inline std::vector<std::pair<uint64_t, uint64_t>> frameRuns(std::vector<uint64_t> pfns)
    {
      std::sort(pfns.begin(), pfns.end());
      std::vector<std::pair<uint64_t, uint64_t>> runs;   // (firstPfn, count)
      for (uint64_t pfn : pfns)
        {
          if (not runs.empty() and runs.back().first + runs.back().second == pfn)
            ++runs.back().second;
          else
            runs.emplace_back(pfn, 1);
        }
      return runs;
    }
  }

  /// The trusted boot sequence. Places the kernel image and modules in
  /// physical memory, builds the page map, optionally defragments module
  /// text into the contiguous pool, programs and locks the permission-table
  /// catalog, seals unused entries, locks the trap vector, arms and locks
  /// enforcement, and finally drops to user mode at the configured entry.
  ///
  /// Catalog programmed (in entry order): kernel text P/RO/X, read-only data
  /// P/RO, syscall table P/RO, config flags P/RO, kernel dynamic data P/RW
  /// (the entry is locked, the memory stays writable), packed module text
  /// P/RO/X, and the optional JIT region P/RW/X. All entries are locked.
  inline BootResult loadAndBoot(Machine& m, const KernelImage& image,
                                const std::vector<ModuleBlob>& modules,
                                const BootConfig& cfg)
  {
    if (m.table().enforceArmed() or m.table().enforceLocked())
      throw BootError(BootError::Kind::MachineNotReset, "enforcement already armed");
    for (unsigned i = 0; i < m.table().capacity(); ++i)
      if (m.table().entry(i).locked)
        throw BootError(BootError::Kind::MachineNotReset, "table entry locked");
    if (m.mode() != PrivMode::Supervisor)
      throw BootError(BootError::Kind::MachineNotReset, "not in supervisor mode");

    BootResult result;
    BootStats& stats = result.stats;
    BootLayout& lay = result.layout;

    // ----- Virtual layout -----

    KernelImage img = image;   // local copy so auto vbases can be filled in
    uint64_t nextVa = kKernelVbase;
    auto autoVa = [&nextVa](uint64_t& vbase, size_t bytes) {
      if (vbase == 0)
        {
          vbase = nextVa;
          nextVa += padToPage(bytes ? bytes : 1);
        }
    };
    autoVa(img.textVbase, img.text.size());
    autoVa(img.rodataVbase, img.rodata.size());
    autoVa(img.syscallVbase, img.syscallTable.size() * 8);
    autoVa(img.configVbase, img.configFlags.size());
    autoVa(img.dataVbase, img.data.size());

    if (img.text.empty())
      throw BootError(BootError::Kind::BadImage, "kernel text is empty");
    for (uint64_t handler : img.syscallTable)
      if (handler < img.textVbase or handler >= img.textVbase + img.text.size())
        throw BootError(BootError::Kind::BadImage,
                        "syscall handler outside kernel text");

    // ----- Physical layout -----

    const auto& mc = m.config();
    FrameAllocator alloc(mc.ramBase >> kPageShift, mc.ramSize >> kPageShift);

    uint64_t dataArenaBytes = padToPage(img.data.size());
    for (const auto& mod : modules)
      dataArenaBytes += padToPage(mod.data.size());
    dataArenaBytes += 2 * kPageSize;   // runtime slack for kernel allocations

    auto reserve = [&alloc](uint64_t bytes) {
      uint64_t pages = pageCount(bytes ? bytes : 1);
      return alloc.allocateRun(pages) << kPageShift;
    };

    std::vector<uint8_t> syscallBytes;
    for (uint64_t handler : img.syscallTable)
      for (unsigned i = 0; i < 8; ++i)
        syscallBytes.push_back(uint8_t(handler >> (8 * i)));

    lay.kernelText = {reserve(img.text.size()), img.textVbase, img.text.size()};
    lay.rodata = {reserve(img.rodata.size()), img.rodataVbase, img.rodata.size()};
    lay.syscallTable = {reserve(syscallBytes.size()), img.syscallVbase,
                        syscallBytes.size()};
    lay.configFlags = {reserve(img.configFlags.size()), img.configVbase,
                       img.configFlags.size()};
    lay.kernelData = {reserve(dataArenaBytes), img.dataVbase, dataArenaBytes};

    PoolRegion pool{};
    if (cfg.defragEnabled)
      {
        uint64_t poolPages = pageCount(cfg.poolBytes);
        uint64_t needed = 0;
        for (const auto& mod : modules)
          needed += pageCount(mod.text.size());
        if (needed > poolPages)
          throw BootError(BootError::Kind::PoolTooSmall,
                          "module text exceeds configured pool");
        pool = {alloc.allocateRun(poolPages), poolPages};
        lay.modulePool = {pool.basePfn << kPageShift, 0, 0};
      }

    if (cfg.jitBytes)
      {
        lay.jitRegion = {reserve(cfg.jitBytes), kJitVbase, cfg.jitBytes};
        for (uint64_t p = 0; p < pageCount(cfg.jitBytes); ++p)
          m.mapPage((kJitVbase >> kPageShift) + p,
                    PageEntry{(lay.jitRegion.pa >> kPageShift) + p,
                              true, true, true, false});
      }

    // ----- Step 1: place kernel segments, build the page map -----

    struct Piece
    {
      Region* region;
      const std::vector<uint8_t>* bytes;
      bool writable;
      bool exec;
    };
    const Piece pieces[] = {
      {&lay.kernelText, &img.text, false, true},
      {&lay.rodata, &img.rodata, false, false},
      {&lay.syscallTable, &syscallBytes, false, false},
      {&lay.configFlags, &img.configFlags, false, false},
      {&lay.kernelData, &img.data, true, false},
    };
    for (const Piece& piece : pieces)
      {
        const Region& r = *piece.region;
        uint64_t pages = pageCount(std::max<uint64_t>(r.bytes, 1));
        for (uint64_t p = 0; p < pages; ++p)
          m.mapPage((r.va >> kPageShift) + p,
                    PageEntry{(r.pa >> kPageShift) + p, true, piece.writable,
                              piece.exec, false});
        if (not piece.bytes->empty())
          m.debugWrite(r.pa, *piece.bytes);
      }

    // ----- Step 2: load modules (boot time is the only time) -----

    std::vector<std::vector<uint64_t>> scatter = scatterModuleFrames(modules, alloc);

    std::vector<ModulePlacement> placed;
    uint64_t dataCursor = lay.kernelData.pa + padToPage(img.data.size());
    for (size_t i = 0; i < modules.size(); ++i)
      {
        const ModuleBlob& blob = modules[i];
        uint64_t slotVa = kModuleVbase + i * kModuleSlotBytes;
        if (padToPage(blob.text.size()) + padToPage(blob.data.size())
            > kModuleSlotBytes)
          throw BootError(BootError::Kind::BadImage,
                          "module '" + blob.name + "' exceeds its VA window");
        placed.push_back(placeModuleText(m, blob, slotVa, scatter[i]));

        // Module data lives inside the kernel dynamic-data arena so the
        // kernel keeps privileged access to it after lockdown.
        if (not blob.data.empty())
          {
            uint64_t dataVa = slotVa + padToPage(blob.text.size());
            uint64_t pages = pageCount(blob.data.size());
            for (uint64_t p = 0; p < pages; ++p)
              m.mapPage((dataVa >> kPageShift) + p,
                        PageEntry{(dataCursor >> kPageShift) + p,
                                  true, true, false, false});
            m.debugWrite(dataCursor, blob.data);
            dataCursor += padToPage(blob.data.size());
          }
      }

    // ----- Step 3: defragment module text into the pool -----

    if (cfg.defragEnabled)
      {
        DefragStats ds = defragment(m, placed, pool, alloc, true);
        stats.pagesCopied = ds.pagesCopied;
        stats.pteRewrites = ds.pteRewrites;
        stats.tlbFlushes = ds.tlbFlushes;
        stats.framesFreed = ds.framesFreed;
        uint64_t usedPages = 0;
        for (const auto& mod : placed)
          usedPages += mod.pages;
        lay.modulePool.bytes = usedPages * kPageSize;
        lay.modulePool.va = placed.empty() ? 0 : placed.front().textVa;
      }

    for (const auto& mod : placed)
      lay.moduleText.push_back({mod.frames.empty() ? 0 : (mod.frames.front() << kPageShift),
                                mod.textVa, mod.pages * kPageSize});

    // ----- Step 4: install the user program -----

    {
      uint64_t pages = pageCount(std::max<uint64_t>(cfg.userProgram.size(), 1));
      uint64_t pa = reserve(pages * kPageSize);
      lay.userRegion = {pa, cfg.userEntry, pages * kPageSize};
      for (uint64_t p = 0; p < pages; ++p)
        m.mapPage((cfg.userEntry >> kPageShift) + p,
                  PageEntry{(pa >> kPageShift) + p, true, true, true, true});
      if (not cfg.userProgram.empty())
        m.debugWrite(pa, cfg.userProgram);
    }

    // ----- Step 5: program the permission-table catalog -----

    struct CatalogRow
    {
      Region region;
      uint64_t flags;
    };
    constexpr uint64_t kLockedValid =
      PermissionTable::kFlagValid | PermissionTable::kFlagLocked;
    constexpr uint64_t P = PermissionTable::kFlagPriv;
    constexpr uint64_t W = PermissionTable::kFlagWrite;
    constexpr uint64_t X = PermissionTable::kFlagExec;

    std::vector<CatalogRow> catalog = {
      {lay.kernelText, P | X | kLockedValid},
      {lay.rodata, P | kLockedValid},
      {lay.syscallTable, P | kLockedValid},
      {lay.configFlags, P | kLockedValid},
      {lay.kernelData, P | W | kLockedValid},
    };
    if (cfg.defragEnabled)
      catalog.push_back({lay.modulePool, P | X | kLockedValid});
    else
      {
        for (const auto& mod : placed)
          for (auto [first, count] : detail::frameRuns(mod.frames))
            catalog.push_back({Region{first << kPageShift, 0, count * kPageSize},
                               P | X | kLockedValid});
      }
    if (cfg.jitBytes)
      catalog.push_back({lay.jitRegion, P | W | X | kLockedValid});

    if (catalog.size() > m.table().capacity())
      throw BootError(BootError::Kind::TableBudgetExceeded,
                      std::to_string(catalog.size()) + " entries needed, capacity "
                      + std::to_string(m.table().capacity()));

    for (unsigned i = 0; i < catalog.size(); ++i)
      detail::programEntry(m, i, catalog[i].region.pa,
                           catalog[i].region.pa + padToPage(catalog[i].region.bytes),
                           catalog[i].flags, stats);
    stats.entriesUsed = catalog.size();

    // Seal what is left so nothing can claim a spare entry later.
    if (cfg.sealUnused)
      for (unsigned i = unsigned(catalog.size()); i < m.table().capacity(); ++i)
        {
          uint64_t base = m.config().tableBase + i * PermissionTable::kEntryStride;
          std::array<uint8_t, 8> buf;
          uint64_t flags = PermissionTable::kFlagLocked;   // valid=0, locked=1
          std::memcpy(buf.data(), &flags, 8);
          if (not m.physWrite(base + PermissionTable::kFlagsOffset, buf,
                              PrivMode::Supervisor, false).ok())
            throw std::logic_error("boot: sealing rejected");
          ++stats.permissionWrites;
        }

    // ----- Step 6: lock the trap vector -----

    m.csrWrite(csr::kStvec, img.trapVector);
    if (cfg.lockStvec)
      m.csrWrite(csr::kLockctl, 1);

    // ----- Step 7: arm and lock enforcement -----

    if (cfg.armEnforce)
      detail::writeEnforce(m, PermissionTable::kEnforceArm | PermissionTable::kEnforceLock,
                           stats);

    // ----- Step 8: drop to user mode -----

    m.setMode(PrivMode::User);
    m.setPc(cfg.userEntry);

    // ----- Symbols for scripted scenarios -----

    lay.userEntry = cfg.userEntry;
    lay.freeFramePa = alloc.lowestFree() << kPageShift;

    auto addRegion = [&lay](const std::string& name, const Region& r) {
      lay.paSymbols[name] = r.pa;
      if (r.va)
        lay.vaSymbols[name] = r.va;
    };
    addRegion("kernel_text", lay.kernelText);
    addRegion("kernel_rodata", lay.rodata);
    addRegion("syscall_table", lay.syscallTable);
    addRegion("config_flags", lay.configFlags);
    addRegion("kernel_data", lay.kernelData);
    if (cfg.defragEnabled)
      addRegion("module_pool", lay.modulePool);
    if (cfg.jitBytes)
      addRegion("jit_region", lay.jitRegion);
    addRegion("user_entry", lay.userRegion);
    for (size_t i = 0; i < lay.moduleText.size(); ++i)
      addRegion("module" + std::to_string(i) + "_text", lay.moduleText[i]);
    lay.paSymbols["free_frame"] = lay.freeFramePa;

    for (const auto& [name, va] : img.symbols)
      {
        lay.vaSymbols[name] = va;
        if (va >= img.textVbase and va < img.textVbase + img.text.size())
          lay.paSymbols[name] = lay.kernelText.pa + (va - img.textVbase);
      }

    return result;
  }

  // ----- The standard preset -----

  /// Kernel trap dispatcher used by the standard preset. On a syscall it
  /// indexes the syscall table with the number in r1, calls the handler, and
  /// sresumes user code after the ecall; any other trap halts (panic).
  /// kfunc_halt is an ordinary kernel function that exists to be the target
  /// of pointer-hook scenarios.
  inline const char* standardKernelSource()
  {
    return R"(
trap_entry:
    csrr r2, scause
    beq r2, r0, dispatch
    halt                      # unexpected trap: kernel panic
dispatch:
    add r4, r1, r1
    add r4, r4, r4
    add r4, r4, r4            # r4 = syscall number * 8
    li r3, %hi(syscall_table)
    addi r3, r3, %lo(syscall_table)
    add r3, r3, r4
    lw r6, 0(r3)
    jalr r5, r6, 0            # call handler, return address in r5
    csrr r7, sepc
    addi r7, r7, 4
    csrw sepc, r7
    sret
kfunc_halt:
    halt
handler_answer:
    li r1, 42
    jalr r0, r5, 0
handler_nop:
    jalr r0, r5, 0
)";
  }

  inline const char* standardUserSource()
  {
    return R"(
user_entry_point:
    li r1, 0                  # syscall 0 returns 42 in r1
    ecall
    halt
)";
  }

  struct StandardPreset
  {
    KernelImage image;
    std::vector<ModuleBlob> modules;
    BootConfig config;
  };

  /// Deterministic synthetic module text: page-sized repeating pattern
  /// seeded per module so copies are checkable.
  inline std::vector<uint8_t> patternBytes(size_t n, uint8_t seed)
  {
    std::vector<uint8_t> v(n);
    uint8_t x = seed;
    for (size_t i = 0; i < n; ++i)
      {
        x = uint8_t(x * 73 + 41);
        v[i] = x;
      }
    return v;
  }

  /// The built-in kernel/module/config combination scenarios boot by
  /// default: a dispatcher kernel with a two-entry syscall table, one page
  /// each of rodata / config flags / dynamic data, and three small modules
  /// loaded at interleaved (non-contiguous) frames.
  inline StandardPreset standardPreset()
  {
    StandardPreset preset;

    KernelImage& img = preset.image;
    img.textVbase = kKernelVbase;
    img.rodataVbase = kKernelVbase + 0x1000;
    img.syscallVbase = kKernelVbase + 0x2000;
    img.configVbase = kKernelVbase + 0x3000;
    img.dataVbase = kKernelVbase + 0x4000;

    Program kernel = assemble(standardKernelSource(), img.textVbase,
                              {{"syscall_table", img.syscallVbase}});
    img.text = kernel.bytes();
    img.symbols = kernel.symbols;
    img.entryPoint = img.textVbase;
    img.trapVector = kernel.symbols.at("trap_entry");
    img.syscallTable = {kernel.symbols.at("handler_answer"),
                        kernel.symbols.at("handler_nop")};
    img.rodata = patternBytes(256, 0x51);
    img.configFlags = {1, 0, 0, 0, 0, 0, 0, 0};   // driver signing: enforced
    img.data = patternBytes(512, 0xa3);

    preset.modules = {
      {"net", patternBytes(2 * kPageSize, 0x11), patternBytes(64, 0x12), {}},
      {"fs", patternBytes(3 * kPageSize, 0x21), patternBytes(96, 0x22), {}},
      {"gpu", patternBytes(1 * kPageSize, 0x31), {}, {}},
    };

    Program user = assemble(standardUserSource(), kUserVbase);
    preset.config.userProgram = user.bytes();
    preset.config.userEntry = kUserVbase;
    preset.config.poolBytes = 16 * kPageSize;

    return preset;
  }

}

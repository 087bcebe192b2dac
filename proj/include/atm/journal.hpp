#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace atm::vault {

class JournalCorrupt : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class JournalLocked : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Destination for complete journal lines (LF included).
class JournalSink {
public:
    virtual ~JournalSink() = default;
    /// Returns only once the line is durable for this sink.
    virtual void append(std::string_view line) = 0;
};

class MemoryJournal final : public JournalSink {
public:
    void append(std::string_view line) override { bytes_.append(line); }
    const std::string& bytes() const noexcept { return bytes_; }

private:
    std::string bytes_;
};

/// O_APPEND file; each append is followed by fdatasync.
class FileJournal final : public JournalSink {
public:
    explicit FileJournal(const std::filesystem::path& path, bool sync = true);
    ~FileJournal() override;
    FileJournal(const FileJournal&) = delete;
    FileJournal& operator=(const FileJournal&) = delete;

    void append(std::string_view line) override;

private:
    int fd_ = -1;
    bool sync_;
};

/// `<body>|<CRC16 as 4 uppercase hex>\n`
std::string seal_line(std::string_view body);

} // namespace atm::vault

#include "atm/journal.hpp"

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fcntl.h>
#include <unistd.h>

#include "atm/wire.hpp"

namespace atm::vault {

FileJournal::FileJournal(const std::filesystem::path& path, bool sync) : sync_(sync)
{
    fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0600);
    if (fd_ < 0)
        throw std::runtime_error("cannot open journal " + path.string() + ": " + std::strerror(errno));
}

FileJournal::~FileJournal()
{
    if (fd_ >= 0)
        ::close(fd_);
}

void FileJournal::append(std::string_view line)
{
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
        const auto n = ::write(fd_, p, left);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw std::runtime_error(std::string("journal write failed: ") + std::strerror(errno));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    if (sync_ && ::fdatasync(fd_) != 0)
        throw std::runtime_error(std::string("journal sync failed: ") + std::strerror(errno));
}

std::string seal_line(std::string_view body)
{
    char crc[8];
    std::snprintf(crc, sizeof crc, "%04X", static_cast<unsigned>(wire::crc16(body)));
    std::string line;
    line.reserve(body.size() + 6);
    line.append(body);
    line.push_back('|');
    line.append(crc);
    line.push_back('\n');
    return line;
}

} // namespace atm::vault

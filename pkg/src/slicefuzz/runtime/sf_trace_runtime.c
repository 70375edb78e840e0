/* Execution-trace runtime linked into instrumented targets.
 *
 * Each __sf_trace(file, line, ordinal) call appends one 10-byte
 * little-endian record (u32 file, u32 line, u16 ordinal) to the file named
 * by the TRACE_OUT environment variable. With TRACE_OUT unset the hook is
 * a no-op. TRACE_CAP, when set, bounds the number of records written.
 *
 * Fatal signals flush the buffer and re-raise so crashing runs still leave
 * a usable trace prefix; SIGTERM flushes and exits so timed-out runs do
 * the same.
 */

#include <fcntl.h>
#include <signal.h>
#include <stdlib.h>
#include <unistd.h>

#define SF_BUF_RECORDS 4096u
#define SF_REC_BYTES 10u

static int sf_fd = -2; /* -2: not yet initialized, -1: disabled */
static unsigned long sf_cap = 0;
static unsigned long sf_written = 0;
static unsigned char sf_buf[SF_BUF_RECORDS * SF_REC_BYTES];
static unsigned long sf_used = 0;

static void sf_flush(void) {
    unsigned long off = 0;
    if (sf_fd < 0 || sf_used == 0)
        return;
    while (off < sf_used) {
        long n = write(sf_fd, sf_buf + off, sf_used - off);
        if (n <= 0)
            break;
        off += (unsigned long)n;
    }
    sf_used = 0;
}

static void sf_on_fatal(int sig) {
    sf_flush();
    signal(sig, SIG_DFL);
    raise(sig);
}

static void sf_on_term(int sig) {
    (void)sig;
    sf_flush();
    _exit(143);
}

static void sf_init(void) {
    const char *path = getenv("TRACE_OUT");
    const char *cap = getenv("TRACE_CAP");
    if (path == NULL || path[0] == '\0') {
        sf_fd = -1;
        return;
    }
    sf_fd = open(path, O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (sf_fd < 0) {
        sf_fd = -1;
        return;
    }
    if (cap != NULL)
        sf_cap = strtoul(cap, NULL, 10);
    atexit(sf_flush);
    signal(SIGSEGV, sf_on_fatal);
    signal(SIGABRT, sf_on_fatal);
    signal(SIGFPE, sf_on_fatal);
    signal(SIGBUS, sf_on_fatal);
    signal(SIGILL, sf_on_fatal);
    signal(SIGTERM, sf_on_term);
}

int __sf_trace(unsigned int file_id, unsigned int line, unsigned int ordinal) {
    unsigned char *p;
    if (sf_fd == -2)
        sf_init();
    if (sf_fd < 0)
        return 0;
    if (sf_cap != 0 && sf_written >= sf_cap)
        return 0;
    if (sf_used >= sizeof(sf_buf))
        sf_flush();
    p = sf_buf + sf_used;
    p[0] = (unsigned char)(file_id);
    p[1] = (unsigned char)(file_id >> 8);
    p[2] = (unsigned char)(file_id >> 16);
    p[3] = (unsigned char)(file_id >> 24);
    p[4] = (unsigned char)(line);
    p[5] = (unsigned char)(line >> 8);
    p[6] = (unsigned char)(line >> 16);
    p[7] = (unsigned char)(line >> 24);
    p[8] = (unsigned char)(ordinal);
    p[9] = (unsigned char)(ordinal >> 8);
    sf_used += SF_REC_BYTES;
    sf_written += 1;
    return 0;
}

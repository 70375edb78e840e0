#include <stdio.h>
#include <string.h>

int main(void) {
    unsigned char buf[8];
    size_t n = fread(buf, 1, sizeof buf, stdin);
    if (n < 4) {
        return 0;
    }
    if (buf[0] == 'X') {
        puts("one");
    }
    if (memcmp(buf + 1, "YZ", 2) == 0) {
        puts("two");
    }
    if (buf[3] == '!') {
        puts("three");
    }
    return 0;
}

#include <stdio.h>
#include <string.h>

int main(void) {
    unsigned char buf[64];
    size_t n = fread(buf, 1, sizeof buf, stdin);
    if (n < 4) {
        return 0;
    }
    if (memcmp(buf, "FZR1", 4) == 0) {
        puts("unlocked");
    }
    return 0;
}
